"""Self-supervised clustering of traffic scenes with a Siamese graph encoder."""

__version__ = "0.1.0"
