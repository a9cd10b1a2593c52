"""Tensor container and result storage."""
