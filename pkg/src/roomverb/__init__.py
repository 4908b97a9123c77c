"""Room-aware reverberation: shoebox fitting, material absorption, RIR synthesis and rendering."""

__version__ = "0.1.0"
