"""Document-level relation extraction over fused constituency and dependency syntax."""

__version__ = "0.1.0"
