"""Safe gradient flow for real-time AC optimal power flow pursuit."""

__version__ = "0.1.0"
