"""Repository-level Verilog indexing and retrieval over a hybrid AST/DFG graph."""

__version__ = "0.1.0"
