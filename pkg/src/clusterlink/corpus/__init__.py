"""Corpus and knowledge-base loading, preprocessing and split bookkeeping."""

from .iob2 import export_iob2, iob_spans, read_iob2, token_spans
from .io import read_documents, write_documents
from .kb import parse_kb, write_kb
from .model import CorpusSplit, Document, Entity, KnowledgeBase, Mention, all_mentions
from .preprocess import OverlapResult, has_overlaps, resolve_overlaps
from .pubtator import parse_pubtator, write_pubtator
from .sentences import split_sentences
from .splits import SplitStats, load_split, split_stats

__all__ = [
    "CorpusSplit",
    "Document",
    "Entity",
    "KnowledgeBase",
    "Mention",
    "OverlapResult",
    "SplitStats",
    "all_mentions",
    "export_iob2",
    "has_overlaps",
    "iob_spans",
    "load_split",
    "parse_kb",
    "parse_pubtator",
    "read_documents",
    "read_iob2",
    "resolve_overlaps",
    "split_sentences",
    "split_stats",
    "token_spans",
    "write_documents",
    "write_kb",
    "write_pubtator",
]
