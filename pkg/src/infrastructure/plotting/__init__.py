"""Analysis figures."""
