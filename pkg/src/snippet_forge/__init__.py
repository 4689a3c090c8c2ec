"""Make incomplete code snippets compilable by inferring their imports and repairing them with compiler feedback."""
from .snippets import CodeSnippet, ImportSet, ImportStatement, Language, MatchCategory, classify_match

__version__ = "0.1.0"

__all__ = ["CodeSnippet", "ImportSet", "ImportStatement", "Language", "MatchCategory", "classify_match", "__version__"]
