"""Motor-fault classification from synthetic antenna S-parameter traces."""

__version__ = "0.1.0"
