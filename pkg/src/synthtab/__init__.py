"""Text-to-tabular synthetic patient data generation and evaluation."""

__version__ = "0.1.0"
