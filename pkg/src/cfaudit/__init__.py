"""Generate counterfactual explanations for black-box classifiers and audit
their proximity, connectedness and stability."""

__version__ = "0.1.0"
