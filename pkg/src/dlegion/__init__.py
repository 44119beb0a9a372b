"""Many-core adaptive-precision systolic-array simulator and analytic toolkit."""

__version__ = "0.1.0"
