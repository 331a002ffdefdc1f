"""SE-EE tradeoff designs for pinching-antenna systems (PASS)."""
__version__ = "0.1.0"
