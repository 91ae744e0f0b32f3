"""Question templates, retrieval-stuffed prompting, answer parsing and DSM assembly."""

from __future__ import annotations

import ast
import logging
import re
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from autodsm.corpus import Chunk, SplitConfig
from autodsm.dsm import Dsm, LinkLabel, new_dsm
from autodsm.oracle import DEFAULT_MODEL, ChatBackend, CompletionAnswer, CompletionRequest
from autodsm.retrieval import Embedder, VectorIndex, top_k

log = logging.getLogger(__name__)

ELEMENTS_TEMPLATE = (
    "Identify the main {product} components that make up a {product}. "
    "Output the answer as a list and a python list. Do not output anything else. "
    "If you don't know the answer, strictly state I don't know instead of making up an answer."
)
LINK_TEMPLATE = (
    "Are {element_a} and {element_b} {linkage_type} linked? State Yes or No. "
    "If you don't know the answer, strictly state I don't know instead of making up an answer."
)
CONTEXT_HEADER = (
    "Use the following pieces of context to answer the question. "
    "If you don't know the answer, say I don't know."
)
ORIENTATION = "row=Element A, column=Element B"

MODES = ("retrieval", "direct")


class QAError(Exception):
    pass


class ElementParseError(QAError):
    def __init__(self, answer: str):
        super().__init__(f"could not find a component list in the answer:\n{answer}")
        self.answer = answer


@dataclass(frozen=True)
class ProductQuery:
    product: str
    linkage_type: str = ""

    def __post_init__(self) -> None:
        if not self.product.strip():
            raise ValueError("product must be non-empty")


@dataclass(frozen=True)
class RunConfig:
    top_k: int = 4
    mode: str = "retrieval"
    split_config: SplitConfig = field(default_factory=SplitConfig)
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_in_flight: int = 4
    context_budget: int = 12000

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.top_k <= 0:
            raise ValueError(f"top_k must be positive, got {self.top_k}")
        if self.max_in_flight <= 0:
            raise ValueError(f"max_in_flight must be positive, got {self.max_in_flight}")


def render_elements_prompt(q: ProductQuery | str) -> str:
    product = q.product if isinstance(q, ProductQuery) else q
    if not product.strip():
        raise ValueError("product must be non-empty")
    return ELEMENTS_TEMPLATE.format(product=product)


def render_link_prompt(a: str, b: str, linkage_type: str = "") -> str:
    if not a.strip() or not b.strip():
        raise ValueError("element names must be non-empty")
    if a == b:
        raise ValueError(f"diagonal pair ({a!r}, {b!r}) is never queried")
    linkage_type = linkage_type.strip()
    template = LINK_TEMPLATE if linkage_type else LINK_TEMPLATE.replace(" {linkage_type} ", " ")
    return template.format(element_a=a, element_b=b, linkage_type=linkage_type)


def stuff_prompt(question: str, chunks: Sequence[Chunk], budget: int | None = None) -> str:
    """Context header, chunk texts separated by blank lines, then the question.

    Lowest-ranked chunks are dropped while the prompt exceeds ``budget`` characters.
    """
    chunks = list(chunks)

    def compose(cs: Sequence[Chunk]) -> str:
        parts = [CONTEXT_HEADER, *(c.text for c in cs), f"Question: {question}"]
        return "\n\n".join(parts)

    prompt = compose(chunks)
    if budget is not None:
        dropped = 0
        while len(prompt) > budget and chunks:
            chunks.pop()
            dropped += 1
            prompt = compose(chunks)
        if dropped:
            log.warning("dropped %d context chunk(s) to fit the %d-character budget", dropped, budget)
    return prompt


def ask(
    question: str,
    cfg: RunConfig,
    index: VectorIndex | None,
    backend: ChatBackend,
    embedder: Embedder | None = None,
) -> CompletionAnswer:
    if cfg.mode == "direct":
        user_text = question
    else:
        if index is None or embedder is None:
            raise QAError("retrieval mode needs a vector index and an embedder")
        user_text = stuff_prompt(question, top_k(index, question, cfg.top_k, embedder), cfg.context_budget)
    req = CompletionRequest(system_text="", user_text=user_text, temperature=cfg.temperature, model_id=cfg.model_id)
    return backend.complete(req)


class ParsedElements(NamedTuple):
    headings: list[str]
    unknown: bool


_BRACKETED = re.compile(r"\[[^\[\]]*\]")
_BULLET = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$")
_QUOTES = "'\"‘’“”`"
_DONT_KNOW = ("i don't know", "i do not know")


def _plain(answer: str) -> str:
    return answer.strip().replace("’", "'").replace("‘", "'")


def _clean_item(item: str) -> str:
    return item.strip().strip(_QUOTES).strip()


def _parse_bracketed(segment: str) -> list[str]:
    try:
        value = ast.literal_eval(segment)
    except (ValueError, SyntaxError):
        value = None
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        items = value
    else:
        items = segment[1:-1].split(",")
    return [c for c in (_clean_item(i) for i in items) if c]


def parse_element_list(answer: str) -> ParsedElements:
    """Headings from the elements answer; the last quoted bracketed list wins."""
    plain = _plain(answer)
    if plain.rstrip(".").strip(_QUOTES + "*").lower() in _DONT_KNOW:
        return ParsedElements([], True)
    candidates = [m.group(0) for m in _BRACKETED.finditer(plain) if any(q in m.group(0) for q in _QUOTES)]
    if candidates:
        items = _parse_bracketed(candidates[-1])
        if items:
            return ParsedElements(items, False)
    items = []
    for line in plain.splitlines():
        m = _BULLET.match(line)
        if m:
            item = _clean_item(m.group(1))
            if item:
                items.append(item)
    if items:
        return ParsedElements(items, False)
    raise ElementParseError(answer)


def _classify(answer: str) -> tuple[LinkLabel, bool]:
    s = _plain(answer).strip("*_`\"' ").rstrip(".!?,;:* ").lower()
    if s.startswith(_DONT_KNOW):
        return LinkLabel.UNKNOWN, True
    if re.match(r"yes\b", s):
        return LinkLabel.LINK, True
    if re.match(r"no\b", s) and not re.match(r"no (idea|clue)\b", s):
        return LinkLabel.NO_LINK, True
    return LinkLabel.UNKNOWN, False


def classify_link_answer(answer: str) -> LinkLabel:
    label, conforming = _classify(answer)
    if not conforming:
        log.warning("non-conforming answer treated as unknown: %r", answer[:120])
    return label


@dataclass(frozen=True)
class PairAnswer:
    row: int
    col: int
    question: str
    answer: str
    label: LinkLabel
    conforming: bool
    cached: bool = False


@dataclass
class GenerationRun:
    dsm: Dsm
    elements_question: str | None = None
    elements_answer: str | None = None
    pairs: list[PairAnswer] = field(default_factory=list)

    @property
    def nonconforming(self) -> int:
        return sum(1 for p in self.pairs if not p.conforming)

    @property
    def calls(self) -> int:
        return len(self.pairs) + (self.elements_question is not None)


class GenerationError(QAError):
    """Generation aborted; ``partial`` holds whatever had been answered."""

    def __init__(self, message: str, partial: GenerationRun | None = None):
        super().__init__(message)
        self.partial = partial


def _unique_headings(items: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        key = item.strip()
        if key in seen:
            log.warning("dropping repeated component %r", item)
            continue
        seen.add(key)
        out.append(key)
    return out


def run_generation(
    corpus_index: VectorIndex | None,
    q: ProductQuery,
    cfg: RunConfig,
    backend: ChatBackend,
    embedder: Embedder | None = None,
    headings_override: Sequence[str] | None = None,
) -> GenerationRun:
    """Ask for the components (unless overridden), then every ordered pair."""
    if cfg.mode == "retrieval" and (corpus_index is None or embedder is None):
        raise QAError("retrieval mode needs a vector index and an embedder")

    elements_question = elements_answer = None
    if headings_override is not None:
        headings = list(headings_override)
    else:
        elements_question = render_elements_prompt(q)
        elements_answer = ask(elements_question, cfg, corpus_index, backend, embedder).text
        parsed = parse_element_list(elements_answer)
        headings = _unique_headings(parsed.headings)
    if not headings:
        raise GenerationError("no components identified")

    dsm = new_dsm(headings)
    sources: list[str] = []
    if cfg.mode == "retrieval" and corpus_index is not None:
        sources = list(dict.fromkeys(c.source_id for c in corpus_index.chunks))
    dsm.provenance.update(
        mode=cfg.mode,
        model_id=cfg.model_id,
        temperature=cfg.temperature,
        top_k=cfg.top_k,
        product=q.product,
        linkage_type=q.linkage_type,
        corpus=sources,
        orientation=ORIENTATION,
        headings_source="override" if headings_override is not None else "model",
    )
    run = GenerationRun(dsm=dsm, elements_question=elements_question, elements_answer=elements_answer)

    n = len(headings)
    jobs = [(i, j) for i in range(n) for j in range(n) if i != j]
    slots: dict[tuple[int, int], PairAnswer] = {}

    def one(i: int, j: int) -> None:
        question = render_link_prompt(headings[i], headings[j], q.linkage_type)
        answer = ask(question, cfg, corpus_index, backend, embedder)
        label, conforming = _classify(answer.text)
        if not conforming:
            log.warning("non-conforming answer for (%s, %s): %r", headings[i], headings[j], answer.text[:120])
        slots[(i, j)] = PairAnswer(i, j, question, answer.text, label, conforming, answer.cached)

    failure: BaseException | None = None
    if cfg.max_in_flight == 1:
        for i, j in jobs:
            try:
                one(i, j)
            except Exception as exc:
                failure = exc
                break
    else:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            futures = [pool.submit(one, i, j) for i, j in jobs]
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            for f in pending:
                f.cancel()
            for f in futures:
                if f.done() and not f.cancelled() and f.exception() is not None:
                    failure = f.exception()
                    break

    for i, j in jobs:
        pair = slots.get((i, j))
        if pair is not None:
            dsm.set(i, j, pair.label)
            run.pairs.append(pair)
    if failure is not None:
        raise GenerationError(
            f"aborted after {len(run.pairs)} of {len(jobs)} pairwise answers: {failure}", partial=run
        ) from failure
    return run


def generate_dsm(
    corpus_index: VectorIndex | None,
    q: ProductQuery,
    cfg: RunConfig,
    backend: ChatBackend,
    embedder: Embedder | None = None,
    headings_override: Sequence[str] | None = None,
) -> Dsm:
    return run_generation(corpus_index, q, cfg, backend, embedder, headings_override).dsm
