"""Fault-type and service ranking by precision-weighted rule votes.

A trained model holds one annotated rule set per fault type, all over the
same binary-feature catalog.  For a query window each sample votes for a
fault type with the highest training precision among that type's rules
covering it (zero if none covers); fault types are ranked by the vote sum
over the window, services by the vote sum over their samples summed
across fault types.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from ruleloc import SCHEMA_VERSION, __version__
from ruleloc.binarize import BinarizationModel, describe_rule
from ruleloc.core import Rule, RuleSet, RuleStats


class UnknownFaultTypeError(ValueError):
    """Queried fault type is not part of the model."""


@dataclass(frozen=True)
class QueryWindow:
    """Binarized samples of one incident window.

    Each sample is a bitmask over catalog feature indices; services align
    one-to-one with samples.
    """

    samples: tuple[int, ...]
    services: tuple[str, ...]
    timestamps: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(self.samples) != len(self.services):
            raise ValueError("each sample needs a service id")
        if self.timestamps and len(self.timestamps) != len(self.samples):
            raise ValueError("timestamps must align with samples")
        if not self.samples:
            raise ValueError("query window must contain at least one sample")


@dataclass(frozen=True)
class Explanation:
    """A rule that contributed votes to a ranked candidate."""

    fault_type: str
    rule_index: int
    description: str
    precision: float
    hits: int


@dataclass(frozen=True)
class RankedResult:
    """Descending (candidate, score) ranking with vote explanations."""

    ranking: tuple[tuple[str, float], ...]
    no_signal: bool
    tie_groups: tuple[tuple[str, ...], ...]
    explanations: Mapping[str, tuple[Explanation, ...]]

    def candidates(self) -> list[str]:
        return [name for name, _ in self.ranking]


@dataclass(frozen=True)
class FaultModel:
    """Per-fault-type annotated rule sets plus the shared feature catalog."""

    rule_sets: tuple[tuple[str, RuleSet], ...]
    binarization: Optional[BinarizationModel] = None
    max_rules: int = 4
    max_len: int = 6
    gamma: float = 1.0
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, rs in self.rule_sets:
            if not rs.annotated:
                raise ValueError(f"rule set for {name!r} is not annotated")

    def fault_types(self) -> list[str]:
        return [name for name, _ in self.rule_sets]

    def rule_set(self, fault_type: str) -> RuleSet:
        for name, rs in self.rule_sets:
            if name == fault_type:
                return rs
        raise UnknownFaultTypeError(f"unknown fault type {fault_type!r}")

    def describe(self, rule: Rule) -> str:
        if self.binarization is not None:
            return describe_rule(self.binarization, rule)
        if not rule.features:
            return "TRUE"
        return " ∧ ".join(f"f{j}" for j in rule.features)

    # -- serialization -------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "binarization": None
            if self.binarization is None
            else self.binarization.to_json_obj(),
            "fault_types": [
                self._rule_set_obj(name, rs) for name, rs in self.rule_sets
            ],
            "metadata": dict(self.metadata),
        }

    def _rule_set_obj(self, name: str, rs: RuleSet) -> dict:
        rules = []
        for rule, stats in zip(rs.rules, rs.stats or ()):
            predicates = []
            for j in rule.features:
                pred: dict[str, object] = {"feature": j}
                if self.binarization is not None:
                    feat = self.binarization.catalog[j]
                    pred["column"] = feat.column
                    pred["op"] = feat.op
                    if feat.op == "==":
                        pred["category"] = feat.category
                    else:
                        pred["threshold"] = feat.threshold
                predicates.append(pred)
            rules.append(
                {
                    "predicates": predicates,
                    "description": self.describe(rule),
                    "precision": stats.precision,
                    "recall": stats.recall,
                    "covered": stats.covered,
                }
            )
        return {
            "fault_type": name,
            "K": self.max_rules,
            "l": self.max_len,
            "gamma": self.gamma,
            "rules": rules,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "FaultModel":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported model schema version {obj.get('schema_version')!r}"
            )
        binarization = (
            None
            if obj.get("binarization") is None
            else BinarizationModel.from_json_obj(obj["binarization"])
        )
        rule_sets = []
        max_rules, max_len, gamma = 4, 6, 1.0
        for entry in obj["fault_types"]:
            rules = []
            stats = []
            for r in entry["rules"]:
                rules.append(Rule(tuple(p["feature"] for p in r["predicates"])))
                stats.append(RuleStats(r["precision"], r["recall"], r["covered"]))
            rule_sets.append(
                (entry["fault_type"], RuleSet(tuple(rules), tuple(stats)))
            )
            max_rules, max_len, gamma = entry["K"], entry["l"], entry["gamma"]
        return cls(
            tuple(rule_sets),
            binarization,
            max_rules,
            max_len,
            gamma,
            dict(obj.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "FaultModel":
        return cls.from_json_obj(json.loads(text))


def _rule_mask(rule: Rule) -> int:
    mask = 0
    for j in rule.features:
        mask |= 1 << j
    return mask


def sample_vote(model: FaultModel, fault_type: str, sample_mask: int) -> float:
    """Vote of one sample for one fault type.

    The highest training precision among the type's rules covering the
    sample, or 0 when no rule covers it.
    """
    rule_set = model.rule_set(fault_type)
    best = 0.0
    for rule, stats in zip(rule_set.rules, rule_set.stats or ()):
        mask = _rule_mask(rule)
        if mask & sample_mask == mask and stats.precision > best:
            best = stats.precision
    return best


def _ranked(scores: dict[str, float], explanations) -> RankedResult:
    no_signal = all(score == 0.0 for score in scores.values())
    ranking = tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))
    groups = []
    i = 0
    names = [name for name, _ in ranking]
    values = [score for _, score in ranking]
    while i < len(ranking):
        j = i
        while j + 1 < len(ranking) and values[j + 1] == values[i]:
            j += 1
        if j > i:
            groups.append(tuple(names[i : j + 1]))
        i = j + 1
    return RankedResult(ranking, no_signal, tuple(groups), explanations)


def rank_fault_types(model: FaultModel, window: QueryWindow) -> RankedResult:
    """Rank fault types by the sum of per-sample votes over the window.

    The full ranking is returned (descending score, ties by name) so that
    top-k evaluation is possible; a window where no rule fires anywhere is
    flagged no_signal and ranked lexicographically.
    """
    scores: dict[str, float] = {}
    explanations: dict[str, tuple[Explanation, ...]] = {}
    for fault_type, rule_set in model.rule_sets:
        total = 0.0
        hits = [0] * len(rule_set.rules)
        masks = [_rule_mask(rule) for rule in rule_set.rules]
        for sample in window.samples:
            best = 0.0
            best_rule = -1
            for idx, (mask, stats) in enumerate(zip(masks, rule_set.stats or ())):
                if mask & sample == mask:
                    hits[idx] += 1
                    if stats.precision > best:
                        best, best_rule = stats.precision, idx
            total += best
        scores[fault_type] = total
        explanations[fault_type] = tuple(
            Explanation(
                fault_type,
                idx,
                model.describe(rule_set.rules[idx]),
                (rule_set.stats or ())[idx].precision,
                hits[idx],
            )
            for idx in range(len(rule_set.rules))
            if hits[idx] > 0
        )
    return _ranked(scores, explanations)


def rank_services(model: FaultModel, window: QueryWindow) -> RankedResult:
    """Rank services by summed votes of their samples across fault types."""
    services = sorted(set(window.services))
    scores = {svc: 0.0 for svc in services}
    hit_counts: dict[str, dict[tuple[str, int], int]] = {svc: {} for svc in services}
    for fault_type, rule_set in model.rule_sets:
        masks = [_rule_mask(rule) for rule in rule_set.rules]
        for sample, svc in zip(window.samples, window.services):
            best = 0.0
            for idx, (mask, stats) in enumerate(zip(masks, rule_set.stats or ())):
                if mask & sample == mask:
                    key = (fault_type, idx)
                    hit_counts[svc][key] = hit_counts[svc].get(key, 0) + 1
                    if stats.precision > best:
                        best = stats.precision
            scores[svc] += best
    explanations = {
        svc: tuple(
            Explanation(
                fault_type,
                idx,
                model.describe(model.rule_set(fault_type).rules[idx]),
                (model.rule_set(fault_type).stats or ())[idx].precision,
                count,
            )
            for (fault_type, idx), count in sorted(hit_counts[svc].items())
        )
        for svc in services
    }
    return _ranked(scores, explanations)


def localization_report(
    model: FaultModel, window: QueryWindow
) -> dict:
    """JSON-ready report with both rankings and vote explanations."""
    faults = rank_fault_types(model, window)
    services = rank_services(model, window)
    def expl_obj(result: RankedResult) -> dict:
        return {
            name: [
                {
                    "fault_type": e.fault_type,
                    "rule_index": e.rule_index,
                    "rule": e.description,
                    "precision": e.precision,
                    "hits": e.hits,
                }
                for e in entries
            ]
            for name, entries in result.explanations.items()
            if entries
        }

    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "no_signal": faults.no_signal,
        "fault_ranking": [
            {"fault_type": name, "score": score} for name, score in faults.ranking
        ],
        "service_ranking": [
            {"service": name, "score": score} for name, score in services.ranking
        ],
        "fault_ties": [list(g) for g in faults.tie_groups],
        "service_ties": [list(g) for g in services.tie_groups],
        "explanations": {
            "fault_types": expl_obj(faults),
            "services": expl_obj(services),
        },
    }
