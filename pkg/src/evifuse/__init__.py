"""Literature-augmented outcome prediction: retrieve, rerank, fuse, predict."""

__version__ = "0.1.0"
