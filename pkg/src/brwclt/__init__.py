"""Critical branching random walks on Z^d: exact simulation and occupation-time CLT checks."""

__version__ = "0.1.0"
