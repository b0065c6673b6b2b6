"""Day-ahead energy/reserve scheduling with deliverability-aware deployment scenarios."""

__version__ = "0.1.0"
