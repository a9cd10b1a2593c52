"""Domain layer: types, configuration models and errors."""
