"""Point-set task codecs, structure-aware point loss, desk-scale point
decoder, evaluation metrics, and few-shot episode sampling."""

__version__ = "0.1.0"
