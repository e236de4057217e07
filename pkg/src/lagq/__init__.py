"""Lagrangian Q-function learning on finite episodic learning processes."""

__version__ = "0.1.0"
