"""Infrastructure layer: storage, configuration, logging, plotting and reporting."""
