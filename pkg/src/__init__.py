"""EEG co-training and adversarial-robustness toolkit."""

__version__ = "0.1.0"
