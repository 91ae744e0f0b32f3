"""Design Structure Matrix generation from plain-text documents with a chat model."""

from autodsm.corpus import Chunk, Document, SplitConfig, load_corpus, split, split_corpus
from autodsm.dsm import Dsm, LinkLabel, new_dsm, read_csv, write_csv
from autodsm.metrics import MetricsReport, compare, completeness, correctness, count_links, report
from autodsm.oracle import (
    CachedBackend,
    CompletionAnswer,
    CompletionRequest,
    RemoteChatBackend,
    ScriptedBackend,
    cache_key,
)
from autodsm.qa import (
    ProductQuery,
    RunConfig,
    ask,
    classify_link_answer,
    generate_dsm,
    parse_element_list,
    render_elements_prompt,
    render_link_prompt,
)
from autodsm.retrieval import (
    OfflineEmbedder,
    RemoteEmbedder,
    VectorIndex,
    build_index,
    cosine_similarity,
    offline_embed,
    top_k,
)

__version__ = "0.1.0"

__all__ = [
    "CachedBackend",
    "Chunk",
    "CompletionAnswer",
    "CompletionRequest",
    "Document",
    "Dsm",
    "LinkLabel",
    "MetricsReport",
    "OfflineEmbedder",
    "ProductQuery",
    "RemoteChatBackend",
    "RemoteEmbedder",
    "RunConfig",
    "ScriptedBackend",
    "SplitConfig",
    "VectorIndex",
    "ask",
    "build_index",
    "cache_key",
    "classify_link_answer",
    "compare",
    "completeness",
    "correctness",
    "cosine_similarity",
    "count_links",
    "generate_dsm",
    "load_corpus",
    "new_dsm",
    "offline_embed",
    "parse_element_list",
    "read_csv",
    "render_elements_prompt",
    "render_link_prompt",
    "report",
    "split",
    "split_corpus",
    "top_k",
    "write_csv",
]
