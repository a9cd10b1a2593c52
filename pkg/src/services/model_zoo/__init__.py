"""Dual-task model construction."""
