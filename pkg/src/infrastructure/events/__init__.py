"""Run event log."""
