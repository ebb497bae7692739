"""Quantitative verification of parametric Markov chains under test-budget
constraints: closed-form property expressions via state elimination,
simultaneous confidence intervals from component-test observations, and an
adaptive per-round partition of the testing budget across components.
"""

__version__ = "0.1.0"
