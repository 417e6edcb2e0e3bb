"""SEAndroid policy normalization, differential analysis, and customized-rule
classification."""

__version__ = "0.1.0"
