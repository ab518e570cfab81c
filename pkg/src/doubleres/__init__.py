"""Digital twin of microwave-optical double resonance in a rare-earth-doped WGM resonator."""

__version__ = "0.1.0"
