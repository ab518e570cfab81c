import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doubleres.cavity import (
    CavityMode,
    CoarseGridWarning,
    RootFindingError,
    anticrossing_map,
    arrowhead_matrix,
    dense_polaritons,
    find_dips,
    linewidth_to_q,
    map_splitting,
    microwave_pull_sweep,
    outer_branches,
    polariton_frequencies,
    polariton_splitting,
    q_to_linewidth,
    reflection,
)
from doubleres.ensemble import EnsembleCoupling, InhomProfile, PacketSet, discretize
from doubleres.physcore import MUB_OVER_H
from doubleres.spinmodel import TransitionId, ZeemanSystem, resonant_field, transition_frequency

MODE = CavityMode(195112.7e9, 1.32e6, 4.0e6)


def one_packet(g, delta=0.0, gamma_h=1e3):
    return EnsembleCoupling(g, PacketSet([delta], [1.0], [1.0], [gamma_h]))


def test_mode_validation_and_properties():
    with pytest.raises(ValueError):
        CavityMode(1e9, 0.0, 1.0)
    with pytest.raises(ValueError):
        CavityMode(1e9, 1.0, -1.0)
    m = CavityMode(1e9, 1e6, 1e6)
    assert m.kappa == 2e6 and m.contrast == 1.0 and m.q == 1000.0


def test_quality_factor_examples():
    assert linewidth_to_q(195126.5e9, 1.32e6) == pytest.approx(1.478e8, rel=5e-4)
    assert abs(linewidth_to_q(195126.5e9, 1.32e6) - 1.48e8) <= 0.12e8
    assert linewidth_to_q(7.0, 7.0) == 1.0
    assert q_to_linewidth(195111.0e9, 1.07e8) / 1e6 == pytest.approx(1.823, abs=1e-3)
    with pytest.raises(ValueError):
        linewidth_to_q(-1.0, 1.0)
    with pytest.raises(ValueError):
        q_to_linewidth(1.0, 0.0)


def test_critical_coupling_full_dip():
    m = CavityMode(1e9, 2e6, 2e6)
    assert abs(reflection(m, 0.0)) == pytest.approx(0.0, abs=1e-15)


def test_ten_percent_contrast():
    ki = 1.32e6
    # 4 ki ke / (ki + ke)^2 = 0.1, under-coupled root
    a = 0.1
    ke = ki * ((2 - a) - 2 * math.sqrt(1 - a)) / a
    m = CavityMode(MODE.nu_c, ki, ke)
    assert m.contrast == pytest.approx(0.1, rel=1e-12)
    assert abs(reflection(m, 0.0)) ** 2 == pytest.approx(0.90, rel=1e-12)


def test_far_detuned_dip_displacement():
    g = 1e8
    delta_ens = 20 * g
    m = CavityMode(1e12, 1e5, 1e5)
    c = one_packet(g)
    lw = 4 * m.kappa
    x = np.linspace(-lw, lw + 2 * g**2 / delta_ens, 200001)
    r2 = np.abs(reflection(m, x, c, ens_offset=delta_ens)) ** 2
    dip = find_dips(x, r2, count=1)[0]
    assert dip == pytest.approx(g**2 / delta_ens, rel=3e-3)
    exact = polariton_frequencies(m, c, delta_ens).frequency[-1] - m.nu_c
    assert exact / (g**2 / delta_ens) - 1 == pytest.approx(-(g / delta_ens) ** 2, rel=0.05)


def test_splitting_is_twice_coupling():
    c = one_packet(1.2e9)
    assert polariton_splitting(MODE, c) == pytest.approx(2.4e9, rel=1e-9)
    b = polariton_frequencies(MODE, c)
    assert b.photon_fraction == pytest.approx([0.5, 0.5], rel=1e-9)


@given(st.floats(1e5, 1e10), st.floats(-2e10, 2e10))
def test_two_mode_closed_form(g, det):
    # low carrier so float spacing stays far below g
    mode = CavityMode(1e9, 1e3, 1e3)
    c = one_packet(g)
    b = polariton_frequencies(mode, c, det)
    nu_a = mode.nu_c - det
    mid = 0.5 * (mode.nu_c + nu_a)
    half = math.sqrt(det**2 / 4 + g**2)
    assert b.frequency[0] - mid == pytest.approx(-half, rel=1e-9)
    assert b.frequency[1] - mid == pytest.approx(half, rel=1e-9)


def test_zero_coupling_gives_bare_modes():
    c = one_packet(0.0)
    b = polariton_frequencies(MODE, c, 3e9)
    assert b.frequency.tolist() == pytest.approx([MODE.nu_c - 3e9, MODE.nu_c], rel=1e-15)
    assert b.photon_fraction.tolist() == [0.0, 1.0]
    assert outer_branches(MODE, c, 3e9).frequency.tolist() == [MODE.nu_c]


def test_three_packets_match_dense_matrix():
    p = PacketSet([-1e9, 0.2e9, 0.9e9], [0.2, 0.5, 0.3], [1.0, 1.0, 1.0], [1e3, 1e3, 1e3])
    c = EnsembleCoupling(1.2e9, p)
    H = arrowhead_matrix(MODE, c, 0.1e9)
    assert H.shape == (4, 4)
    roots = polariton_frequencies(MODE, c, 0.1e9).frequency
    dense = dense_polaritons(MODE, c, 0.1e9).frequency
    assert np.allclose(roots - MODE.nu_c, dense - MODE.nu_c, rtol=1e-9, atol=1e-9 * 1.2e9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1), st.floats(-3e9, 3e9))
def test_roots_match_dense_for_small_ensembles(n, seed, offset):
    rng = np.random.default_rng(seed)
    det = rng.normal(0, 5e8, n)
    w = rng.uniform(0.1, 1.0, n)
    p = PacketSet(det, w / w.sum(), rng.uniform(0, 1, n), rng.uniform(1e3, 1e6, n))
    c = EnsembleCoupling(rng.uniform(1e7, 2e9), p)
    b = polariton_frequencies(MODE, c, offset)
    d = dense_polaritons(MODE, c, offset)
    scale = max(np.max(np.abs(d.frequency - MODE.nu_c)), 1.0)
    assert len(b) == n + 1
    assert np.max(np.abs(b.frequency - d.frequency)) <= 1e-9 * scale
    assert np.all(np.diff(b.frequency) >= 0)
    assert b.photon_fraction.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(b.photon_fraction, d.photon_fraction, atol=1e-7)


def test_degenerate_packets_produce_dark_states():
    p = PacketSet([0.0, 0.0, 5e8], [0.25, 0.25, 0.5], [1.0, 1.0, 1.0], [1e3, 1e3, 1e3])
    c = EnsembleCoupling(1e9, p)
    b = polariton_frequencies(MODE, c)
    d = dense_polaritons(MODE, c)
    assert len(b) == 4
    assert np.allclose(b.frequency - MODE.nu_c, d.frequency - MODE.nu_c, atol=1e-3)
    assert b.photon_fraction.sum() == pytest.approx(1.0, abs=1e-9)


def test_branches_weak_coupling_photon_fraction():
    c = EnsembleCoupling(1.0, discretize(InhomProfile(0, 200e6), 64, 1e3))
    b = polariton_frequencies(MODE, c, 2e9)
    assert np.max(b.photon_fraction) == pytest.approx(1.0, abs=1e-9)
    assert np.sum(b.photon_fraction > 0.5) == 1


def test_negative_population_rejected():
    p = PacketSet([0.0], [1.0], [-0.5], [1e3])
    with pytest.raises(ValueError):
        polariton_frequencies(MODE, EnsembleCoupling(1e9, p))
    with pytest.raises(ValueError):
        dense_polaritons(MODE, EnsembleCoupling(1e9, p))


def test_root_finding_error_is_runtime_error():
    assert issubclass(RootFindingError, RuntimeError)


def test_linewidths_follow_photon_fraction():
    c = one_packet(1e9, gamma_h=1e3)
    b = polariton_frequencies(MODE, c)
    assert b.linewidth == pytest.approx([0.5 * (MODE.kappa + 1e3)] * 2, rel=1e-9)


def test_min_splitting_at_degeneracy():
    c = EnsembleCoupling(1.2e9, discretize(InhomProfile(0, 200e6), 1024, 1e3))
    offsets = np.linspace(-3e9, 3e9, 61)
    split = [polariton_splitting(MODE, c, o) for o in offsets]
    assert abs(offsets[int(np.argmin(split))]) <= offsets[1] - offsets[0]


@settings(max_examples=50, deadline=None)
@given(st.floats(-5e9, 5e9), st.floats(0, 1), st.floats(1e5, 1e7), st.floats(0, 2e7))
def test_reflection_is_passive(delta, s, ki, ke):
    m = CavityMode(MODE.nu_c, ki, ke)
    p = discretize(InhomProfile(0, 200e6), 64, 1e4, s)
    r = reflection(m, delta, EnsembleCoupling(1e9, p), ens_offset=1e8)
    assert abs(r) ** 2 <= 1 + 1e-12


SYS = ZeemanSystem()


def _map(T, power=0.0, n=1024, laser=None, b=None):
    from doubleres.ensemble import RateParams

    mode = CavityMode(195112.8e9, 1.823e6, 1.0e6)
    B_res = resonant_field(SYS, TransitionId.O_24, mode.nu_c)
    b = np.array([B_res]) if b is None else b
    laser = np.linspace(-2.5e9, 2.5e9, 5001) if laser is None else laser
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        return anticrossing_map(mode, SYS, TransitionId.O_24, b, laser,
                                InhomProfile(0, 200e6), 4e9, n_packets=n, temperature=T,
                                optical_power=power, rate=RateParams(10e-3, 807.0, 200e6))


def test_map_splitting_follows_thermal_polarization():
    s29 = map_splitting(_map(2.9), min_separation=1e8)[0]
    s4 = map_splitting(_map(4.0), min_separation=1e8)[0]
    from doubleres.physcore import H, K_B

    B = resonant_field(SYS, TransitionId.O_24, 195112.8e9)
    nu = float(transition_frequency(SYS, TransitionId.MW_12, B))
    ratio = math.sqrt(math.tanh(H * nu / (2 * K_B * 2.9)) / math.tanh(H * nu / (2 * K_B * 4.0)))
    assert s29 / s4 == pytest.approx(ratio, rel=0.01)


def test_splitting_decreases_with_optical_power():
    split = [map_splitting(_map(2.9, p), min_separation=1e8)[0] for p in (0.0, 5e-3, 15e-3, 50e-3)]
    assert all(a > b for a, b in zip(split, split[1:]))


def test_far_field_shows_single_dispersed_mode():
    from doubleres.physcore import H, K_B

    B = 0.9
    scan = _map(4.0, b=np.array([B]), laser=np.linspace(-1e9, 1e9, 4001), n=256)
    dips = find_dips(scan.axis2.values, scan.values[0], count=2)
    assert dips.size == 1
    det = 195112.8e9 - float(transition_frequency(SYS, TransitionId.O_24, B))
    s = math.tanh(H * float(transition_frequency(SYS, TransitionId.MW_12, B)) / (2 * K_B * 4.0))
    assert dips[0] == pytest.approx(4e9**2 * s / det, rel=0.05)


def test_map_checks_grids_and_warns():
    mode = CavityMode(195112.8e9, 1.823e6, 1.0e6)
    args = (mode, SYS, TransitionId.O_24)
    with pytest.raises(ValueError):
        anticrossing_map(*args, [0.2, 0.1], [0.0, 1e5], InhomProfile(0, 2e8), 1e9, n_packets=8)
    with pytest.warns(CoarseGridWarning):
        anticrossing_map(*args, [0.1], [0.0, 1e7], InhomProfile(0, 2e8), 1e9, n_packets=8)


def test_map_parallel_rows_identical():
    b = np.linspace(0.14, 0.15, 6)
    laser = np.linspace(-2e9, 2e9, 801)
    mode = CavityMode(195112.8e9, 1.823e6, 1.0e6)
    kw = dict(n_packets=128, temperature=4.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        a = anticrossing_map(mode, SYS, TransitionId.O_24, b, laser, InhomProfile(0, 2e8), 2e9, **kw)
        c = anticrossing_map(mode, SYS, TransitionId.O_24, b, laser, InhomProfile(0, 2e8), 2e9,
                             workers=4, **kw)
    assert np.array_equal(a.values, c.values)
    assert a.shape == (6, 801)


def test_find_dips_parabolic_refinement():
    x = np.linspace(-1, 1, 201)
    y = (x - 0.0123) ** 2
    assert find_dips(x, y, 1)[0] == pytest.approx(0.0123, abs=1e-12)
    two = find_dips(x, np.minimum((x + 0.5) ** 2, (x - 0.5) ** 2 + 0.01), 2)
    assert two == pytest.approx([-0.5, 0.5], abs=1e-9)


def test_microwave_pull_sweep():
    prof = InhomProfile(0, 47.4e6)
    mw = CavityMode(12.155e9, 0.5e6, 0.5e6)
    c = EnsembleCoupling(1e6, discretize(prof, 4096, 100e3, 0.07))
    B0 = resonant_field(SYS, TransitionId.MW_12, mw.nu_c)
    slope = 11.52 * MUB_OVER_H
    half = 3 * prof.sigma / slope
    b = np.concatenate([np.linspace(B0 - half, B0 + half, 601)])
    scan = microwave_pull_sweep(mw, SYS, c, b)
    at = microwave_pull_sweep(mw, SYS, c, [B0])
    assert at.values[0] == pytest.approx(0.0, abs=1e-9 * np.max(np.abs(scan.values)))
    # 2 sigma in field units
    assert 2 * prof.sigma / slope * 1e3 == pytest.approx(0.250, abs=5e-4)
    # true extremum separation of the dispersive pull: 2 x 1.3069 sigma
    sep = b[np.argmax(scan.values)] - b[np.argmin(scan.values)]
    assert abs(sep) == pytest.approx(2 * 1.3069 * prof.sigma / slope, rel=0.02)
    with pytest.raises(ValueError):
        microwave_pull_sweep(mw, SYS, c, b[::-1])
