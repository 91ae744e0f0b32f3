"""Command-line front end: ``generate``, ``evaluate`` and ``show-prompts``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from autodsm import __version__
from autodsm.corpus import CorpusError, SplitConfig, load_corpus, split_corpus
from autodsm.dsm import DsmError, read_csv, write_csv
from autodsm.metrics import report
from autodsm.oracle import (
    DEFAULT_MODEL,
    BackendError,
    CachedBackend,
    ChatBackend,
    RemoteChatBackend,
    ScriptedBackend,
    ScriptMissError,
)
from autodsm.qa import (
    CONTEXT_HEADER,
    ELEMENTS_TEMPLATE,
    LINK_TEMPLATE,
    GenerationError,
    GenerationRun,
    ProductQuery,
    QAError,
    RunConfig,
    run_generation,
)
from autodsm.retrieval import (
    Embedder,
    OfflineEmbedder,
    RemoteEmbedder,
    RetrievalError,
    VectorIndex,
    build_index,
    load_index,
    save_index,
)

log = logging.getLogger("autodsm")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

DEFAULT_ENDPOINT = "https://api.openai.com/v1"
DEFAULT_EMBEDDING_MODEL = "text-embedding-ada-002"


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str = "generate"
    inputs: list[str] = field(default_factory=list)
    product: str = ""
    linkage_type: str = ""
    output: str = ""
    backend: str = "cached-remote"
    model: str = DEFAULT_MODEL
    endpoint: str = DEFAULT_ENDPOINT
    temperature: float = 0.0
    chunk_size: int = 1000
    overlap: int = 150
    top_k: int = 4
    mode: str = "retrieval"
    headings_override: str | None = None
    cache: str | None = None
    script: str | None = None
    max_in_flight: int = 4
    embedder: str = "auto"
    embedding_model: str = DEFAULT_EMBEDDING_MODEL
    embedding_dim: int = 256
    index_cache: str | None = None
    context_budget: int = 12000
    generated: str = ""
    reference: str = ""
    report: str | None = None

    def validate(self) -> None:
        if self.subcommand == "generate":
            if self.mode not in ("retrieval", "direct"):
                raise UsageError(f"--mode must be retrieval or direct, got {self.mode!r}")
            if self.mode == "retrieval" and not self.inputs:
                raise UsageError("generate needs --input unless --mode direct")
            if not self.product.strip():
                raise UsageError("generate needs a non-empty --product")
            if not self.output:
                raise UsageError("generate needs --output")
            if self.backend == "scripted" and not self.script:
                raise UsageError("--backend scripted needs --script")
            try:
                SplitConfig(self.chunk_size, self.overlap)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            if self.top_k <= 0 or self.max_in_flight <= 0:
                raise UsageError("--top-k and --max-in-flight must be positive")
        elif self.subcommand == "evaluate":
            if not self.generated or not self.reference:
                raise UsageError("evaluate needs --generated and --reference")


def show_prompts() -> str:
    return (
        f"[elements]\n{ELEMENTS_TEMPLATE}\n\n"
        f"[link]\n{LINK_TEMPLATE}\n\n"
        f"[context-header]\n{CONTEXT_HEADER}\n"
    )


def read_headings_file(path: str | Path) -> list[str]:
    """One heading per line, order kept; blank lines skipped."""
    text = Path(path).read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


def make_backend(cfg: CliConfig) -> ChatBackend:
    backend: ChatBackend
    if cfg.backend == "scripted":
        backend = ScriptedBackend.from_file(cfg.script)
    elif cfg.backend in ("remote", "cached-remote"):
        if not os.environ.get("DSM_API_KEY"):
            log.warning("DSM_API_KEY is not set; sending requests without authentication")
        backend = RemoteChatBackend(base_url=cfg.endpoint, max_in_flight=cfg.max_in_flight)
    else:
        raise UsageError(f"unknown backend {cfg.backend!r}")
    cache = cfg.cache
    if cfg.backend == "cached-remote" and cache is None:
        cache = cfg.output + ".cache.jsonl"
    if cache is not None:
        backend = CachedBackend(backend, cache)
    return backend


def make_embedder(cfg: CliConfig) -> Embedder:
    kind = cfg.embedder
    if kind == "auto":
        kind = "offline" if cfg.backend == "scripted" else "remote"
    if kind == "offline":
        return OfflineEmbedder(cfg.embedding_dim)
    if kind == "remote":
        return RemoteEmbedder(model=cfg.embedding_model, base_url=cfg.endpoint)
    raise UsageError(f"unknown embedder {cfg.embedder!r}")


def _index_for(cfg: CliConfig, embedder: Embedder) -> VectorIndex:
    docs = load_corpus(cfg.inputs)
    chunks = split_corpus(docs, SplitConfig(cfg.chunk_size, cfg.overlap))
    if not chunks:
        raise RetrievalError("the input documents are empty")
    if cfg.index_cache and Path(cfg.index_cache).exists():
        cached = load_index(cfg.index_cache)
        if cached.embedder_id == embedder.embedder_id and cached.chunks == chunks:
            log.info("reusing vector index from %s", cfg.index_cache)
            return cached
        log.info("index cache %s is stale; rebuilding", cfg.index_cache)
    index = build_index(chunks, embedder, max_workers=cfg.max_in_flight)
    if cfg.index_cache:
        save_index(index, cfg.index_cache)
    return index


def _write_run_log(path: Path, cfg: CliConfig, run: GenerationRun, elapsed: float, error: str | None) -> None:
    headings = run.dsm.headings
    record = {
        "version": __version__,
        "config": asdict(cfg),
        "provenance": run.dsm.provenance,
        "components": list(headings),
        "elements_question": run.elements_question,
        "elements_answer": run.elements_answer,
        "completion_calls": run.calls,
        "nonconforming_answers": run.nonconforming,
        "pairs": [
            {
                "element_a": headings[p.row],
                "element_b": headings[p.col],
                "answer": p.answer,
                "label": p.label.token,
                "conforming": p.conforming,
                "cached": p.cached,
            }
            for p in run.pairs
        ],
        "elapsed_seconds": round(elapsed, 3),
        "error": error,
    }
    path.write_text(json.dumps(record, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def run_generate(
    cfg: CliConfig,
    backend: ChatBackend | None = None,
    embedder: Embedder | None = None,
) -> int:
    """Build the DSM described by ``cfg`` and write CSV plus a JSON run log.

    ``backend``/``embedder`` override the ones ``cfg`` would construct.
    """
    started = time.monotonic()
    try:
        cfg.validate()
        backend = backend or make_backend(cfg)
        override = read_headings_file(cfg.headings_override) if cfg.headings_override else None
        index = None
        if cfg.mode == "retrieval":
            embedder = embedder or make_embedder(cfg)
            index = _index_for(cfg, embedder)
        elif cfg.inputs:
            log.warning("--mode direct ignores --input")
        run_cfg = RunConfig(
            top_k=cfg.top_k,
            mode=cfg.mode,
            split_config=SplitConfig(cfg.chunk_size, cfg.overlap),
            model_id=cfg.model,
            temperature=cfg.temperature,
            max_in_flight=cfg.max_in_flight,
            context_budget=cfg.context_budget,
        )
        query = ProductQuery(cfg.product, cfg.linkage_type)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, RetrievalError, BackendError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    output = Path(cfg.output)
    log_path = output.with_name(output.name + ".log.json")
    try:
        run = run_generation(index, query, run_cfg, backend, embedder, override)
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.partial is not None:
            partial = output.with_name(output.name + ".partial.csv")
            partial.write_bytes(write_csv(exc.partial.dsm))
            _write_run_log(log_path, cfg, exc.partial, time.monotonic() - started, str(exc))
            print(f"partial DSM written to {partial}", file=sys.stderr)
        return EXIT_FAILURE
    except (QAError, DsmError, BackendError, ScriptMissError, RetrievalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_bytes(write_csv(run.dsm))
    _write_run_log(log_path, cfg, run, time.monotonic() - started, None)
    log.info(
        "%d components, %d completion calls, %d non-conforming answers",
        run.dsm.n,
        run.calls,
        run.nonconforming,
    )
    return EXIT_OK


def run_evaluate(cfg: CliConfig) -> int:
    try:
        cfg.validate()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        generated = read_csv(Path(cfg.generated).read_bytes())
        reference = read_csv(Path(cfg.reference).read_bytes())
        rep = report(generated, reference)
    except (OSError, DsmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    sys.stdout.write(rep.to_text())
    kv_path = Path(cfg.report) if cfg.report else Path(cfg.generated + ".metrics.txt")
    kv_path.write_text(rep.to_kv(), encoding="utf-8")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autodsm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--show-prompts", action="store_true", help="print the prompt templates and exit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    gen = sub.add_parser("generate", help="generate a DSM from text documents")
    gen.add_argument("--config", help="JSON file of default option values (keys as in --help, with underscores)")
    gen.add_argument("--input", dest="inputs", nargs="+", default=[], metavar="PATH")
    gen.add_argument("--product")
    gen.add_argument("--linkage-type", default="")
    gen.add_argument("--output")
    gen.add_argument("--backend", choices=("remote", "scripted", "cached-remote"), default="cached-remote")
    gen.add_argument("--model", default=DEFAULT_MODEL)
    gen.add_argument("--endpoint", default=DEFAULT_ENDPOINT, help="base URL of an OpenAI-compatible API")
    gen.add_argument("--temperature", type=float, default=0.0)
    gen.add_argument("--chunk-size", type=int, default=1000)
    gen.add_argument("--overlap", type=int, default=150)
    gen.add_argument("--top-k", type=int, default=4)
    gen.add_argument("--mode", choices=("retrieval", "direct"), default="retrieval")
    gen.add_argument("--headings-override", metavar="PATH", help="one component per line; skips the elements question")
    gen.add_argument("--cache", metavar="PATH", help="response cache (JSON lines)")
    gen.add_argument("--script", metavar="PATH", help="answer script for --backend scripted")
    gen.add_argument("--max-in-flight", type=int, default=4)
    gen.add_argument("--embedder", choices=("auto", "offline", "remote"), default="auto")
    gen.add_argument("--embedding-model", default=DEFAULT_EMBEDDING_MODEL)
    gen.add_argument("--embedding-dim", type=int, default=256, help="dimension of the offline embedder")
    gen.add_argument("--index-cache", metavar="PATH", help="reuse/store the vector index here")
    gen.add_argument("--context-budget", type=int, default=12000, help="max characters per stuffed prompt")
    gen.add_argument("--show-prompts", action="store_true", help="print the prompt templates and exit")

    ev = sub.add_parser("evaluate", help="score a generated DSM against a reference DSM")
    ev.add_argument("--generated", required=True, metavar="CSV")
    ev.add_argument("--reference", required=True, metavar="CSV")
    ev.add_argument("--report", metavar="PATH", help="key: value output (default: <generated>.metrics.txt)")

    sub.add_parser("show-prompts", help="print the prompt templates")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        values = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read --config {known.config}: {exc}")
    gen = parser._subparsers._group_actions[0].choices["generate"]  # type: ignore[union-attr]
    gen.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})


def config_from_args(ns: argparse.Namespace) -> CliConfig:
    names = CliConfig.__dataclass_fields__.keys()
    values = {k: v for k, v in vars(ns).items() if k in names and v is not None}
    return CliConfig(**values)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config_file(parser, argv)
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if ns.verbose > 1 else logging.INFO if ns.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if ns.show_prompts or ns.subcommand == "show-prompts":
        sys.stdout.write(show_prompts())
        return EXIT_OK
    if ns.subcommand is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    cfg = config_from_args(ns)
    if ns.subcommand == "generate":
        return run_generate(cfg)
    return run_evaluate(cfg)


if __name__ == "__main__":
    sys.exit(main())
