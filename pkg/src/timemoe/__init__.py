"""Temporal RUS estimation and interaction-aware MoE routing for multimodal time series."""

__version__ = "0.1.0"
