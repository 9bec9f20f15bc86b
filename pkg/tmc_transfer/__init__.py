"""
tmc-transfer: turning movement count estimation by instance-based transfer learning

Lasso feature selection, similar-intersection matching, data substitution and
Two-stage TrAdaBoost.R2, with a synthetic data generator and an evaluation harness.
"""

__version__ = "0.1.0"
