"""Run summary rendering."""
