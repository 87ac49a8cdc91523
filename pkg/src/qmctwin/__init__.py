"""Digital twin of quantum micro-chiplet fabrication, assembly and characterisation."""

__version__ = "0.1.0"
