"""Loading plain-text documents and cutting them into overlapping chunks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(Exception):
    """Raised when an input document cannot be loaded."""


@dataclass(frozen=True)
class Document:
    source_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.source_id:
            raise ValueError("Document.source_id must be non-empty")


@dataclass(frozen=True)
class Chunk:
    source_id: str
    ordinal: int
    text: str
    start_offset: int

    @property
    def end_offset(self) -> int:
        return self.start_offset + len(self.text)


@dataclass(frozen=True)
class SplitConfig:
    chunk_size: int = 1000
    overlap: int = 150

    def __post_init__(self) -> None:
        if self.chunk_size <= 0:
            raise ValueError(f"chunk_size must be positive, got {self.chunk_size}")
        if self.overlap < 0:
            raise ValueError(f"overlap must be non-negative, got {self.overlap}")
        if self.overlap >= self.chunk_size:
            raise ValueError(
                f"overlap ({self.overlap}) must be smaller than chunk_size ({self.chunk_size})"
            )

    @property
    def stride(self) -> int:
        return self.chunk_size - self.overlap


def load_corpus(paths: Sequence[str | Path]) -> list[Document]:
    """Read each path as UTF-8 text, one Document per path, in the given order."""
    docs = []
    for raw in paths:
        path = Path(raw)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise CorpusError(f"input file not found: {path}") from None
        except IsADirectoryError:
            raise CorpusError(f"input path is a directory: {path}") from None
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(
                f"{path}: not valid UTF-8 at byte offset {exc.start}"
            ) from None
        docs.append(Document(source_id=str(path), text=text))
    return docs


def split(doc: Document, cfg: SplitConfig | None = None) -> list[Chunk]:
    """Fixed-stride character split; stops once a chunk reaches the end of the text."""
    cfg = cfg or SplitConfig()
    text = doc.text
    n = len(text)
    chunks: list[Chunk] = []
    start = 0
    while start < n:
        end = min(start + cfg.chunk_size, n)
        chunks.append(
            Chunk(source_id=doc.source_id, ordinal=len(chunks), text=text[start:end], start_offset=start)
        )
        if end >= n:
            break
        start += cfg.stride
    return chunks


def split_corpus(docs: Iterable[Document], cfg: SplitConfig | None = None) -> list[Chunk]:
    # no chunk ever spans two documents
    out: list[Chunk] = []
    for doc in docs:
        out.extend(split(doc, cfg))
    return out
