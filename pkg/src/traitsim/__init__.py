"""Trait-driven generative-agent social media simulation and analytics."""

__version__ = "0.1.0"
