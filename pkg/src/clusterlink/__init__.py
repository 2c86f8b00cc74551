"""Entity linking by constrained clustering of mentions and knowledge-base entities."""

__version__ = "0.1.0"
