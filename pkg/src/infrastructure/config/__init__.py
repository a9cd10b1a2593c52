"""Experiment configuration loading."""
