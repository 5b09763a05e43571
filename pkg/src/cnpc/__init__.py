"""Causal graphs compiled to arithmetic circuits, fused with a neural
attribute predictor for interventional class prediction."""

__version__ = "0.1.0"
