"""Independent oracles, synthetic DSM builders and backend test doubles."""

from __future__ import annotations

import itertools
import math
import threading

from hypothesis import strategies as st

from autodsm.dsm import Dsm, LinkLabel
from autodsm.oracle import CompletionAnswer, CompletionRequest

L, N, U = LinkLabel.LINK, LinkLabel.NO_LINK, LinkLabel.UNKNOWN


heading_text = st.text(
    alphabet=st.sampled_from(list("abcXYZ 09,\"'-&()é\n")), min_size=1, max_size=12
).filter(lambda s: s.strip())


@st.composite
def dsms(draw, max_n=30):
    names = draw(st.lists(heading_text, min_size=1, max_size=max_n, unique_by=lambda s: s.strip()))
    n = len(names)
    labels = draw(st.lists(st.sampled_from([L, N, U]), min_size=n * n, max_size=n * n))
    grid = [[L if i == j else labels[i * n + j] for j in range(n)] for i in range(n)]
    return Dsm(names, grid)


def headings(n: int, prefix: str = "C") -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(n)]


def unordered_pairs(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def build_counts(n: int, mutual_pairs: int, single_links: int, unknowns: int) -> Dsm:
    """Fill pairs in order: mutual links, then one-way links, then unknown entries.

    Everything else is NO_LINK.
    """
    grid = [[L if i == j else N for j in range(n)] for i in range(n)]
    pairs = unordered_pairs(n)
    assert mutual_pairs + single_links <= len(pairs)
    it = iter(pairs)
    for _ in range(mutual_pairs):
        i, j = next(it)
        grid[i][j] = grid[j][i] = L
    for _ in range(single_links):
        i, j = next(it)
        grid[i][j] = L
    remaining = [e for p in it for e in (p, p[::-1])]
    assert unknowns <= len(remaining)
    for i, j in remaining[:unknowns]:
        grid[i][j] = U
    return Dsm(headings(n), grid)


def reference_pair() -> tuple[Dsm, Dsm]:
    """22 components. Reference: 32 mutual pairs (64 links), rest NO_LINK.

    Generated, by block of unordered pairs:
      0-9   mutual link (ref link)       20 entries match
      10-13 unknown both ways (ref link)
      14-31 no link both ways (ref link)
      32-39 mutual link (ref no link)
      40-60 one-way link, reverse no link (ref no link)
      61-72 unknown both ways (ref no link)
      rest  no link (ref no link)
    """
    n = 22
    pairs = unordered_pairs(n)
    ref = [[L if i == j else N for j in range(n)] for i in range(n)]
    gen = [[L if i == j else N for j in range(n)] for i in range(n)]
    for k, (i, j) in enumerate(pairs):
        if k < 32:
            ref[i][j] = ref[j][i] = L
        if k < 10 or 32 <= k < 40:
            gen[i][j] = gen[j][i] = L
        elif 10 <= k < 14 or 61 <= k < 73:
            gen[i][j] = gen[j][i] = U
        elif 40 <= k < 61:
            gen[i][j] = L
    names = headings(n, "Component ")
    return Dsm(names, gen), Dsm(names, ref)


class CountingBackend:
    """Wraps a backend and records every request it forwards."""

    def __init__(self, inner):
        self.inner = inner
        self.backend_id = f"counting:{inner.backend_id}"
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, req: CompletionRequest) -> CompletionAnswer:
        with self._lock:
            self.requests.append(req)
        return self.inner.complete(req)


class FunctionBackend:
    """Answers with ``fn(user_text)``."""

    backend_id = "function"

    def __init__(self, fn):
        self.fn = fn

    def complete(self, req: CompletionRequest) -> CompletionAnswer:
        return CompletionAnswer(self.fn(req.user_text), self.backend_id)


def reference_split(text: str, size: int, overlap: int) -> list[tuple[int, str]]:
    """Walks the string: take a window, drop one stride off the front, repeat."""
    out = []
    rest, offset = text, 0
    while rest:
        out.append((offset, rest[:size]))
        if len(rest) <= size:
            break
        rest = rest[size - overlap :]
        offset += size - overlap
    return out


def brute_cosine(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def brute_top_k(entries, query, k):
    """Score every (chunk, vector) in pure Python, full sort, tie-break on (source_id, ordinal)."""
    scored = [(brute_cosine(list(v), list(query)), c) for c, v in entries]
    scored.sort(key=lambda sc: (-sc[0], sc[1].source_id, sc[1].ordinal))
    return [c for _, c in scored[:k]]
