"""corpusforge: chat-corpus refinement, embedding-gated self-chat
generation, and masked-LM quality scoring."""

from .model import (
    ContentClass,
    Conversation,
    Corpus,
    LanguageTag,
    Message,
    Origin,
    Role,
    StageReport,
    UnparseableTranscript,
    canonicalize_text,
    hash_text,
    parse_raw_fauno,
)
from .corpus_io import read_corpus_jsonl, write_corpus_jsonl
from .embedding import VectorStore
from .generator import GenerationConfig, run_campaign
from .quality import filter_by_quality, message_quality, score_corpus, sentence_nll
from .refinery import FlowPattern, RefineConfig, run_refinement
from .seeds import extract_seeds, load_trees

__version__ = "0.1.0"

__all__ = [
    "ContentClass", "Conversation", "Corpus", "LanguageTag", "Message",
    "Origin", "Role", "StageReport", "UnparseableTranscript",
    "canonicalize_text", "hash_text", "parse_raw_fauno",
    "read_corpus_jsonl", "write_corpus_jsonl", "VectorStore",
    "GenerationConfig", "run_campaign", "filter_by_quality",
    "message_quality", "score_corpus", "sentence_nll", "FlowPattern",
    "RefineConfig", "run_refinement", "extract_seeds", "load_trees",
]
