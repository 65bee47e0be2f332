"""moocmine: pattern mining and course recommendation on MOOC activity logs."""

__version__ = "0.1.0"
