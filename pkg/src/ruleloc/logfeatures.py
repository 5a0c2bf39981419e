"""Log novelty features.

An offline pass over normal-period logs builds a base of message
templates (token sequences with wildcard slots, grouped by token count
and first-token class for cheap candidate lookup).  Online lines are then
matched against the base; lines matching no stored template are "novel"
and are counted per time interval, producing numeric columns that join
the metric table.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional, Sequence

WILDCARD = "<*>"

DEFAULT_DEPTH = 4
DEFAULT_SIMILARITY = 0.5


def _mask_token(token: str) -> str:
    # Tokens carrying digits are treated as parameters, not message text.
    return WILDCARD if any(ch.isdigit() for ch in token) else token


def tokenize(line: str) -> tuple[str, ...]:
    return tuple(_mask_token(tok) for tok in line.split())


def similarity(tokens: Sequence[str], template: Sequence[str]) -> float:
    """Fraction of positions the template accepts; lengths must agree.

    A wildcard slot in the template accepts any token, so a line keeps
    similarity 1 to every template it helped generalize.
    """
    if len(tokens) != len(template) or not template:
        return 0.0
    hits = sum(t == WILDCARD or x == t for x, t in zip(tokens, template))
    return hits / len(template)


def _group_key(tokens: Sequence[str]) -> tuple[int, str]:
    return len(tokens), tokens[0]


@dataclass
class TemplateBase:
    """Parsed message templates from a normal-period corpus."""

    similarity_threshold: float = DEFAULT_SIMILARITY
    tree_depth: int = DEFAULT_DEPTH
    groups: dict[tuple[int, str], list[list[str]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("similarity threshold must lie in (0, 1]")
        if self.tree_depth < 2:
            raise ValueError("tree depth must be >= 2")

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def templates(self) -> list[tuple[str, ...]]:
        out = [tuple(t) for group in self.groups.values() for t in group]
        return sorted(out)

    def _candidates(self, tokens: Sequence[str]) -> Iterable[list[str]]:
        key = _group_key(tokens)
        yield from self.groups.get(key, ())
        if key[1] != WILDCARD:
            yield from self.groups.get((key[0], WILDCARD), ())

    def _best(self, tokens: Sequence[str]) -> tuple[Optional[list[str]], float]:
        # Ties broken by the lexicographically smaller template, so the
        # result does not depend on storage order.
        best: Optional[list[str]] = None
        best_sim = -1.0
        for template in self._candidates(tokens):
            sim = similarity(tokens, template)
            if sim > best_sim or (sim == best_sim and best is not None and template < best):
                best_sim, best = sim, template
        return best, best_sim

    def match(self, tokens: Sequence[str]) -> Optional[tuple[str, ...]]:
        """Best stored template with similarity >= threshold, or None."""
        if not tokens:
            return None
        best, best_sim = self._best(tokens)
        if best is not None and best_sim >= self.similarity_threshold:
            return tuple(best)
        return None

    def _insert(self, tokens: Sequence[str]) -> None:
        best, best_sim = self._best(tokens)
        if best is not None and best_sim >= self.similarity_threshold:
            old_key = _group_key(best)
            for i, (x, y) in enumerate(zip(tokens, best)):
                if x != y and y != WILDCARD:
                    best[i] = WILDCARD
            new_key = _group_key(best)
            if new_key != old_key:
                self.groups[old_key].remove(best)
                if not self.groups[old_key]:
                    del self.groups[old_key]
                self.groups.setdefault(new_key, []).append(best)
        else:
            self.groups.setdefault(_group_key(tokens), []).append(list(tokens))


def build_template_base(
    lines: Iterable[str],
    depth: int = DEFAULT_DEPTH,
    sim: float = DEFAULT_SIMILARITY,
) -> TemplateBase:
    """Parse a normal-period line stream into a template base.

    A line merges into the most similar stored template at or above the
    threshold (wildcarding the differing slots) or is stored verbatim as a
    new template.  Every non-blank input line matches a stored template
    afterwards, because wildcard slots keep accepting the tokens they
    replaced.  Blank lines are ignored.
    """
    base = TemplateBase(similarity_threshold=sim, tree_depth=depth)
    for line in lines:
        tokens = tokenize(line)
        if tokens:
            base._insert(tokens)
    return base


@dataclass(frozen=True)
class IntervalCounts:
    start: float
    total: int
    unmatched: int
    new_template_counts: tuple[tuple[tuple[str, ...], int], ...]

    @property
    def distinct_new(self) -> int:
        return len(self.new_template_counts)


@dataclass(frozen=True)
class LogFeatureFrame:
    """Per-interval novelty counters aligned to the metric sample interval."""

    interval_seconds: float
    rows: tuple[IntervalCounts, ...]
    skipped: int

    def counters(self) -> dict[float, tuple[int, int, int]]:
        return {r.start: (r.total, r.unmatched, r.distinct_new) for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["interval_start", "total", "unmatched", "distinct_new"])
        for row in self.rows:
            start = int(row.start) if row.start == int(row.start) else row.start
            writer.writerow([start, row.total, row.unmatched, row.distinct_new])
        return buf.getvalue()


def parse_timestamp(raw: str, fmt: Optional[str] = None) -> float:
    """Epoch seconds of a timestamp token; naive times are taken as UTC."""
    if fmt is None:
        text = raw.replace("Z", "+00:00") if raw.endswith("Z") else raw
        dt = datetime.fromisoformat(text)
    else:
        dt = datetime.strptime(raw, fmt)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def split_timestamp(line: str, fmt: Optional[str] = None) -> tuple[float, str]:
    """Split a timestamp-prefixed line into (epoch seconds, message)."""
    n_stamp = 1 if fmt is None else fmt.count(" ") + 1
    tokens = line.split(None, n_stamp)
    if len(tokens) < n_stamp:
        raise ValueError("line shorter than its timestamp")
    stamp = " ".join(tokens[:n_stamp])
    rest = tokens[n_stamp] if len(tokens) > n_stamp else ""
    return parse_timestamp(stamp, fmt), rest


def match_and_aggregate(
    base: TemplateBase,
    lines: Iterable[str],
    interval: float,
    timestamp_format: Optional[str] = None,
) -> LogFeatureFrame:
    """Count total / unmatched / distinct-novel lines per time interval.

    Interval boundaries are floor(epoch / interval) * interval.  Lines
    whose timestamp cannot be parsed (and blank lines) are skipped and
    tallied; matching never mutates the base, so aggregate counts are
    order-insensitive within an interval.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    totals: dict[float, int] = {}
    unmatched: dict[float, int] = {}
    novel: dict[float, dict[tuple[str, ...], int]] = {}
    skipped = 0
    for line in lines:
        if not line.strip():
            skipped += 1
            continue
        try:
            epoch, message = split_timestamp(line, timestamp_format)
        except ValueError:
            skipped += 1
            continue
        start = (epoch // interval) * interval
        totals[start] = totals.get(start, 0) + 1
        tokens = tokenize(message)
        if tokens and base.match(tokens) is not None:
            continue
        unmatched[start] = unmatched.get(start, 0) + 1
        shapes = novel.setdefault(start, {})
        shapes[tokens] = shapes.get(tokens, 0) + 1
    rows = tuple(
        IntervalCounts(
            start,
            totals[start],
            unmatched.get(start, 0),
            tuple(sorted(novel.get(start, {}).items())),
        )
        for start in sorted(totals)
    )
    return LogFeatureFrame(float(interval), rows, skipped)


def cluster_count_reference(lines: Iterable[str], sim: float = DEFAULT_SIMILARITY) -> int:
    """Index-free reference for the template count (test oracle).

    Applies the same eligibility (same length, same first-token class),
    similarity and merge rules as build_template_base, but scans a flat
    template list instead of the grouped index.
    """
    clusters: list[list[str]] = []
    for line in lines:
        tokens = tokenize(line)
        if not tokens:
            continue
        best = None
        best_sim = -1.0
        for template in clusters:
            if len(template) != len(tokens):
                continue
            if template[0] != tokens[0] and template[0] != WILDCARD:
                continue
            s = similarity(tokens, template)
            if s > best_sim or (s == best_sim and best is not None and template < best):
                best_sim, best = s, template
        if best is not None and best_sim >= sim:
            for i, (x, y) in enumerate(zip(tokens, best)):
                if x != y and y != WILDCARD:
                    best[i] = WILDCARD
        else:
            clusters.append(list(tokens))
    return len(clusters)
