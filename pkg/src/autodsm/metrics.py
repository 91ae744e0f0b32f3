"""Link counts, Correctness, Completeness and agreement with a reference DSM."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction

from autodsm.dsm import Dsm, DsmError, LinkLabel

UNDEFINED = "---"


def percent(numerator: int, denominator: int) -> float | None:
    """``100 * numerator / denominator`` to one decimal, halves away from zero.

    Rounds the exact rational, so 54.45 really is 54.5. ``None`` when the
    denominator is zero.
    """
    if denominator == 0:
        return None
    tenths = Fraction(1000 * numerator, denominator)
    sign = -1 if tenths < 0 else 1
    return sign * math.floor(abs(tenths) + Fraction(1, 2)) / 10


def format_percent(value: float | None) -> str:
    return UNDEFINED if value is None else f"{value:.1f}%"


def entries_to_fill(n: int) -> int:
    return n * n - n


def count_links(dsm: Dsm) -> int:
    return sum(1 for _, _, label in dsm.off_diagonal() if label is LinkLabel.LINK)


def correctness(dsm: Dsm) -> tuple[int, float | None]:
    """Directed links whose transpose is also a link, and their share of all links."""
    symmetrical = sum(
        1
        for i, j, label in dsm.off_diagonal()
        if label is LinkLabel.LINK and dsm.get(j, i) is LinkLabel.LINK
    )
    return symmetrical, percent(symmetrical, count_links(dsm))


def completeness(dsm: Dsm) -> tuple[int, float | None]:
    useful = sum(1 for _, _, label in dsm.off_diagonal() if label is not LinkLabel.UNKNOWN)
    return useful, percent(useful, entries_to_fill(dsm.n))


def check_aligned(generated: Dsm, reference: Dsm) -> None:
    if generated.n != reference.n:
        raise DsmError(f"size mismatch: generated has {generated.n} headings, reference has {reference.n}")
    for i, (g, r) in enumerate(zip(generated.headings, reference.headings)):
        if g.strip() != r.strip():
            raise DsmError(f"heading mismatch at position {i}: generated {g!r} vs reference {r!r}")


def compare(generated: Dsm, reference: Dsm) -> tuple[int, float | None]:
    """Off-diagonal positions where both matrices carry the same label."""
    check_aligned(generated, reference)
    identical = sum(1 for i, j, label in generated.off_diagonal() if label is reference.get(i, j))
    return identical, percent(identical, entries_to_fill(reference.n))


@dataclass(frozen=True)
class MetricsReport:
    n: int
    entries_to_fill: int
    links_found: int
    symmetrical_links: int
    correctness_pct: float | None
    useful_entries: int
    completeness_pct: float | None
    identical_entries: int | None = None
    identical_pct: float | None = None

    @property
    def has_reference(self) -> bool:
        return self.identical_entries is not None

    def to_text(self) -> str:
        rows = [
            ("Components found", str(self.n)),
            ("DSM entries to be filled", str(self.entries_to_fill)),
            ("Links found", str(self.links_found)),
            ("Symmetrical links found", f"{self.symmetrical_links} ({format_percent(self.correctness_pct)})"),
            ("Entries with a useful label", f"{self.useful_entries} ({format_percent(self.completeness_pct)})"),
        ]
        if self.has_reference:
            rows.append(
                ("Identical DSM entries", f"{self.identical_entries} ({format_percent(self.identical_pct)})")
            )
        width = max(len(name) for name, _ in rows)
        return "".join(f"{name:<{width}}  {value}\n" for name, value in rows)

    def to_kv(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name.startswith("identical") and not self.has_reference:
                continue
            if value is None:
                value = UNDEFINED
            elif isinstance(value, float):
                value = f"{value:.1f}"
            lines.append(f"{f.name}: {value}\n")
        return "".join(lines)


def report(dsm: Dsm, reference: Dsm | None = None) -> MetricsReport:
    symmetrical, correctness_pct = correctness(dsm)
    useful, completeness_pct = completeness(dsm)
    identical = identical_pct = None
    if reference is not None:
        identical, identical_pct = compare(dsm, reference)
    return MetricsReport(
        n=dsm.n,
        entries_to_fill=entries_to_fill(dsm.n),
        links_found=count_links(dsm),
        symmetrical_links=symmetrical,
        correctness_pct=correctness_pct,
        useful_entries=useful,
        completeness_pct=completeness_pct,
        identical_entries=identical,
        identical_pct=identical_pct,
    )
