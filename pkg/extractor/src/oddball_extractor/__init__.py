"""Language-model dump extractor for the oddball scoring pipeline."""

__version__ = "0.1.0"

from .extract import ExtractionConfig, ExtractionError, extract_sentences, write_dump

__all__ = ["ExtractionConfig", "ExtractionError", "extract_sentences", "write_dump"]
