"""Export ViT patch features per stimulus into the GZFG grid format."""

__version__ = "0.1.0"
