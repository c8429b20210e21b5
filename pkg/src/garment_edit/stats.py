"""Dataset statistics over a manifest: category shares, retention, word counts, keywords."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .synthesis import EditCategory

DEFAULT_TOP_K = 30

STOP_WORDS = frozenset(
    """a an the and or but of to in on at by for with from into onto as is are be been was were it its
    this that these those so than then there their them they he she his her i you your we our us me my
    not no yes do does did done have has had will would can could should may might must shall
    all any each every some more most other such only own same very just also too up down out over
    under again further once here when where why how what which who whom while if because about against
    between through during before after above below off""".split()
)

_PUNCT = re.compile(r"[^\w\s]")


class EmptyManifest(ValueError):
    pass


def keywords(text: str) -> list[str]:
    tokens = _PUNCT.sub(" ", text.lower()).split()
    return [t for t in tokens if len(t) > 1 and t not in STOP_WORDS and not t.isdigit()]


@dataclass
class StatsReport:
    attempted: dict[str, int]
    kept: dict[str, int]
    attempted_shares: dict[str, Fraction]
    kept_shares: dict[str, Fraction | None]
    retention: Fraction
    mean_words: dict[str, float | None]
    top_keywords: list[tuple[str, int]] = field(default_factory=list)

    @property
    def total_attempted(self) -> int:
        return sum(self.attempted.values())

    @property
    def total_kept(self) -> int:
        return sum(self.kept.values())

    def to_dict(self) -> dict:
        return {
            "total_attempted": self.total_attempted,
            "total_kept": self.total_kept,
            "retention": float(self.retention),
            "categories": {
                c: {
                    "attempted": self.attempted[c],
                    "kept": self.kept[c],
                    "attempted_share": float(self.attempted_shares[c]),
                    "kept_share": None if self.kept_shares[c] is None else float(self.kept_shares[c]),
                }
                for c in self.attempted
            },
            "mean_words": self.mean_words,
            "top_keywords": [[w, n] for w, n in self.top_keywords],
        }

    def render(self) -> str:
        lines = [f"{'category':<24}{'attempted':>10}{'share':>9}{'kept':>8}{'share':>9}"]
        for c in self.attempted:
            ks = self.kept_shares[c]
            lines.append(
                f"{c:<24}{self.attempted[c]:>10}{float(self.attempted_shares[c]):>9.1%}{self.kept[c]:>8}"
                f"{'-' if ks is None else format(float(ks), '.1%'):>9}"
            )
        lines.append(f"{'total':<24}{self.total_attempted:>10}{'':>9}{self.total_kept:>8}")
        lines.append(f"retention: {float(self.retention):.4f}")
        for name, value in self.mean_words.items():
            lines.append(f"mean words, {name}: {'-' if value is None else f'{value:.1f}'}")
        if self.top_keywords:
            lines.append("top keywords: " + ", ".join(f"{w} ({n})" for w, n in self.top_keywords))
        return "\n".join(lines) + "\n"


def compute_stats(manifest, top_k: int = DEFAULT_TOP_K) -> StatsReport:
    """Shares are exact fractions; ``float(share)`` rounds once."""
    records = manifest.records if hasattr(manifest, "records") else list(manifest)
    if not records:
        raise EmptyManifest("manifest has no records")
    attempted = {c.value: 0 for c in EditCategory}
    kept = {c.value: 0 for c in EditCategory}
    words = {"original_description": [], "edit_instruction": [], "edited_description": []}
    counts: Counter[str] = Counter()
    for r in records:
        attempted[r["category"]] += 1
        if r.get("decision") == "Keep":
            kept[r["category"]] += 1
        for name, bucket in words.items():
            text = r.get(name)
            if text:
                bucket.append(len(text.split()))
        if r.get("edit_instruction"):
            counts.update(keywords(r["edit_instruction"]))
    total = sum(attempted.values())
    total_kept = sum(kept.values())
    return StatsReport(
        attempted=attempted,
        kept=kept,
        attempted_shares={c: Fraction(n, total) for c, n in attempted.items()},
        kept_shares={c: (Fraction(n, total_kept) if total_kept else None) for c, n in kept.items()},
        retention=Fraction(total_kept, total),
        mean_words={k: (sum(v) / len(v) if v else None) for k, v in words.items()},
        # ties broken alphabetically so the table is stable
        top_keywords=sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k],
    )
