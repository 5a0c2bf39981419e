"""Single-rule subproblem solver.

Each selection iteration needs the rule maximizing
``alpha * log(num(r)) - log(den(r))`` over rules of bounded length, where
``num(r)`` counts positives covered by the rule or the current set and
``den(r)`` counts all samples covered plus the positive total.  Finding
the exact maximizer is intractable, so the solver iterates a
minorize-maximize scheme: anchor a surrogate at the current rule, maximize
the surrogate by greedy insertion plus replace/delete local search, and
re-anchor at the best true objective value found.

Two surrogates are built per anchor, one from each of the two modular
lower bounds on the (supermodular, non-increasing) numerator count, both
combined with the tangent-line upper bound on the log-denominator.  The
surrogates are submodular, touch the true objective at the anchor, and are
cheap: the bound part is modular, so only the denominator needs a fresh
set operation per candidate feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from ruleloc.core import (
    TIE_EPS,
    BinaryDataset,
    ObjectiveContext,
    Rule,
    rule_objective,
)


class NoRuleFound(Exception):
    """No rule can improve the current cover (stop signal for selection)."""


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs of the subproblem solver.

    max_len caps rule length; alpha is the distortion weight; the eps
    values implement early stopping (a surrogate step must beat the
    incumbent by more than local_search_eps to commit).
    """

    max_len: int = 6
    alpha: float = 1.0
    max_mm_iters: int = 50
    improvement_eps: float = 1e-9
    local_search_eps: float = 1e-9

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.improvement_eps <= 0 or self.local_search_eps <= 0:
            raise ValueError("eps values must be positive")


@dataclass(frozen=True)
class MMTraceRecord:
    """One diagnostics record per branch per MM iteration."""

    iteration: int
    branch: str  # "seed", "bound1", "bound2" or "anchor"
    rule: Rule
    surrogate: float
    objective: float


def _num_count(dataset: BinaryDataset, cover: int, base_pos: int) -> int:
    return ((cover & dataset.labels) | base_pos).bit_count()


def _den_count(dataset: BinaryDataset, cover: int, base_cover: int) -> int:
    return (cover | base_cover).bit_count() + dataset.positives


@dataclass(frozen=True)
class SurrogateState:
    """Surrogate ingredients anchored at the current rule estimate.

    Caches the anchor's numerator/denominator counts and the per-feature
    numerator marginals that the two modular bounds need:

    * drop_penalty[j]      num(j | anchor minus j)   for j in the anchor
    * drop_penalty_full[j] num(j | all features minus j)  for j in the anchor
    * add_gain_empty[j]    num(j | empty rule)       for every feature
    * add_gain_anchor[j]   num(j | anchor)           for every feature

    All marginals are <= 0 because adding a conjunct can only shrink the
    rule's cover.
    """

    ctx: ObjectiveContext
    anchor: Rule
    num_anchor: int
    den_anchor: int
    drop_penalty: dict[int, int]
    drop_penalty_full: dict[int, int]
    add_gain_empty: tuple[int, ...]
    add_gain_anchor: tuple[int, ...]

    @classmethod
    def build(cls, ctx: ObjectiveContext, anchor: Rule) -> "SurrogateState":
        ds = ctx.dataset
        cov = ds.coverage
        full = ds.full_mask
        anchor_cover = full
        for j in anchor.features:
            anchor_cover &= cov[j]
        num_anchor = _num_count(ds, anchor_cover, ctx.cover_pos)
        den_anchor = _den_count(ds, anchor_cover, ctx.cover)
        num_empty = _num_count(ds, full, ctx.cover_pos)

        drop_penalty: dict[int, int] = {}
        drop_penalty_full: dict[int, int] = {}
        if anchor.features:
            # Intersection of all features, via prefix/suffix products so the
            # leave-one-out cover costs O(d) set operations overall.
            d = ds.d
            prefix = [full] * (d + 1)
            for j in range(d):
                prefix[j + 1] = prefix[j] & cov[j]
            suffix = [full] * (d + 1)
            for j in range(d - 1, -1, -1):
                suffix[j] = suffix[j + 1] & cov[j]
            for j in anchor.features:
                rest = full
                for k in anchor.features:
                    if k != j:
                        rest &= cov[k]
                drop_penalty[j] = num_anchor - _num_count(ds, rest, ctx.cover_pos)
                all_but_j = prefix[j] & suffix[j + 1]
                drop_penalty_full[j] = _num_count(
                    ds, all_but_j & cov[j], ctx.cover_pos
                ) - _num_count(ds, all_but_j, ctx.cover_pos)

        add_gain_empty = tuple(
            _num_count(ds, cov[j], ctx.cover_pos) - num_empty for j in range(ds.d)
        )
        add_gain_anchor = tuple(
            _num_count(ds, anchor_cover & cov[j], ctx.cover_pos) - num_anchor
            for j in range(ds.d)
        )
        return cls(
            ctx,
            anchor,
            num_anchor,
            den_anchor,
            drop_penalty,
            drop_penalty_full,
            add_gain_empty,
            add_gain_anchor,
        )

    def bound_weight(self, j: int, kind: int) -> int:
        """Additive contribution of feature j to the modular numerator bound."""
        if kind == 1:
            return self.drop_penalty[j] if j in self.drop_penalty else self.add_gain_empty[j]
        if kind == 2:
            return (
                self.drop_penalty_full[j]
                if j in self.drop_penalty_full
                else self.add_gain_anchor[j]
            )
        raise ValueError("kind must be 1 or 2")

    def bound_base(self, kind: int) -> int:
        """Bound value of the empty rule (all anchor features dropped)."""
        if kind not in (1, 2):
            raise ValueError("kind must be 1 or 2")
        penalties = self.drop_penalty if kind == 1 else self.drop_penalty_full
        return self.num_anchor - sum(penalties[j] for j in self.anchor.features)


def numerator_lower_bound(state: SurrogateState, rule: Rule, kind: int) -> float:
    """Modular lower bound on the numerator count, tight at the anchor."""
    return state.bound_base(kind) + sum(
        state.bound_weight(j, kind) for j in rule.features
    )


def surrogate_value(state: SurrogateState, rule: Rule, kind: int) -> float:
    """Surrogate objective: alpha*log(bound) - den(rule)/den(anchor).

    -inf when the numerator bound is non-positive (the log-domain guard);
    at the anchor this equals alpha*log(num(anchor)) - 1.
    """
    bound = numerator_lower_bound(state, rule, kind)
    if bound <= 0:
        return -math.inf
    ds = state.ctx.dataset
    cover = ds.full_mask
    for j in rule.features:
        cover &= ds.coverage[j]
    den = _den_count(ds, cover, state.ctx.cover)
    return state.ctx.alpha * math.log(bound) - den / state.den_anchor


def surrogate_offset(state: SurrogateState) -> float:
    """Constant by which the true objective dominates the surrogate.

    objective(r) >= surrogate(r) + (1 - log den(anchor)) for every rule,
    with equality at the anchor.
    """
    return 1.0 - math.log(state.den_anchor)


def greedy_ratio_seed(ctx: ObjectiveContext, max_len: int) -> Rule:
    """Initial rule: repeatedly add the feature with the best precision ratio.

    The ratio is |newly covered positives| / |newly covered samples| of the
    whole candidate rule relative to the current set cover.  Stops early
    when no feature keeps the newly covered positive mass non-empty; may
    return the empty rule if no single feature covers an uncovered
    positive.
    """
    ds = ctx.dataset
    rule_cover = ds.full_mask
    chosen: list[int] = []
    for _ in range(max_len):
        best_j = -1
        best_ratio = -1.0
        for j in range(ds.d):
            if j in chosen:
                continue
            cand = rule_cover & ds.coverage[j]
            new = cand & ~ctx.cover
            new_pos = new & ds.labels
            if new_pos == 0:
                continue
            ratio = new_pos.bit_count() / new.bit_count()
            if ratio > best_ratio + TIE_EPS:
                best_ratio, best_j = ratio, j
        if best_j < 0:
            break
        chosen.append(best_j)
        rule_cover &= ds.coverage[best_j]
    return Rule(tuple(chosen))


class _BranchSearch:
    """Greedy insertion + replace/delete local search under one surrogate."""

    def __init__(self, state: SurrogateState, kind: int, config: GenerationConfig):
        self.state = state
        self.kind = kind
        self.config = config
        self.ds = state.ctx.dataset
        self.base_cover = state.ctx.cover
        self.features: list[int] = []
        self.cover = self.ds.full_mask
        self.bound = float(state.bound_base(kind))

    def _value_of(self, bound: float, cover: int) -> float:
        if bound <= 0:
            return -math.inf
        den = _den_count(self.ds, cover, self.base_cover)
        return self.state.ctx.alpha * math.log(bound) - den / self.state.den_anchor

    def value(self) -> float:
        return self._value_of(self.bound, self.cover)

    def greedy_insert(self) -> None:
        current = self.value()
        while len(self.features) < self.config.max_len:
            best_j = -1
            best_val = -math.inf
            for j in range(self.ds.d):
                if j in self.features:
                    continue
                val = self._value_of(
                    self.bound + self.state.bound_weight(j, self.kind),
                    self.cover & self.ds.coverage[j],
                )
                if val > best_val + TIE_EPS:
                    best_val, best_j = val, j
            # Insert only while the surrogate marginal stays positive; padding
            # a rule with zero-gain conjuncts only hurts interpretability.
            if best_j < 0 or best_val - current <= 0.0:
                break
            self.features.append(best_j)
            self.cover &= self.ds.coverage[best_j]
            self.bound += self.state.bound_weight(best_j, self.kind)
            current = best_val

    def local_search(self) -> None:
        eps = self.config.local_search_eps
        changed = True
        while changed:
            changed = False
            for i in list(self.features):
                if i not in self.features:
                    continue
                rest = [k for k in self.features if k != i]
                rest_cover = self.ds.full_mask
                rest_bound = self.state.bound_base(self.kind)
                for k in rest:
                    rest_cover &= self.ds.coverage[k]
                    rest_bound += self.state.bound_weight(k, self.kind)
                current = self.value()
                best_val = -math.inf
                best_j: Optional[int] = None  # None encodes "no move"
                best_key: tuple[int, ...] = ()
                if rest:  # deletion allowed, but a rule never shrinks to empty
                    val = self._value_of(rest_bound, rest_cover)
                    best_val, best_j, best_key = val, -1, tuple(rest)
                for j in range(self.ds.d):
                    if j in self.features:
                        continue
                    val = self._value_of(
                        rest_bound + self.state.bound_weight(j, self.kind),
                        rest_cover & self.ds.coverage[j],
                    )
                    key = tuple(sorted(rest + [j]))
                    if val > best_val + TIE_EPS or (
                        val > best_val - TIE_EPS and key < best_key
                    ):
                        best_val, best_j, best_key = val, j, key
                if best_j is not None and best_val > current + eps:
                    if best_j < 0:
                        self.features = rest
                        self.cover, self.bound = rest_cover, rest_bound
                    else:
                        self.features = sorted(rest + [best_j])
                        self.cover = rest_cover & self.ds.coverage[best_j]
                        self.bound = rest_bound + self.state.bound_weight(
                            best_j, self.kind
                        )
                    changed = True

    def run(self) -> Rule:
        self.greedy_insert()
        self.local_search()
        return Rule(tuple(self.features))


def _objective_polish(ctx: ObjectiveContext, rule: Rule, config: GenerationConfig) -> Rule:
    """Replace/delete single features while the true objective improves.

    Run once on the MM result, this makes the returned rule a 1-swap local
    optimum of the objective itself, not only of the final surrogate (the
    tangent-line denominator bound undervalues cover-growing moves, so a
    surrogate fixpoint can still admit an objective-improving swap).
    """
    ds = ctx.dataset
    features = list(rule.features)
    current = rule_objective(ctx, rule)
    changed = True
    while changed:
        changed = False
        for i in list(features):
            if i not in features:
                continue
            rest = tuple(k for k in features if k != i)
            best_val = -math.inf
            best_j: Optional[int] = None
            best_key: tuple[int, ...] = ()
            if rest:
                best_val, best_j, best_key = rule_objective(ctx, Rule(rest)), -1, rest
            for j in range(ds.d):
                if j in features:
                    continue
                cand = tuple(sorted(rest + (j,)))
                val = rule_objective(ctx, Rule(cand))
                if val > best_val + TIE_EPS or (
                    val > best_val - TIE_EPS and cand < best_key
                ):
                    best_val, best_j, best_key = val, j, cand
            if best_j is not None and best_val > current + config.local_search_eps:
                features = list(best_key)
                current = best_val
                changed = True
    return Rule(tuple(features))


TraceSink = Callable[[MMTraceRecord], None]


def generate_rule(
    ctx: ObjectiveContext,
    config: GenerationConfig,
    trace: Optional[TraceSink] = None,
) -> Rule:
    """Approximately maximize the single-rule objective.

    Seeds with the precision-ratio greedy rule, then alternates surrogate
    construction and surrogate maximization; each iteration keeps the best
    of the two branch results and the previous anchor under the true
    objective, so the objective trace is non-decreasing.  A final
    replace/delete pass on the true objective makes the returned rule a
    1-swap local optimum.  Raises NoRuleFound when every positive is
    already covered or no feature covers a new positive.
    """
    ds = ctx.dataset
    if ds.labels & ~ctx.cover_pos == 0:
        raise NoRuleFound("every positive sample is already covered")
    seed = greedy_ratio_seed(ctx, config.max_len)
    if not seed.features:
        raise NoRuleFound("no feature covers an uncovered positive sample")

    anchor = seed
    anchor_obj = rule_objective(ctx, anchor)
    if trace:
        trace(MMTraceRecord(0, "seed", anchor, math.nan, anchor_obj))

    for t in range(1, config.max_mm_iters + 1):
        state = SurrogateState.build(ctx, anchor)
        best, best_obj = anchor, anchor_obj
        for kind in (1, 2):
            branch = _BranchSearch(state, kind, config).run()
            if not branch.features:
                continue
            obj = rule_objective(ctx, branch)
            if trace:
                trace(
                    MMTraceRecord(
                        t, f"bound{kind}", branch, surrogate_value(state, branch, kind), obj
                    )
                )
            if obj > best_obj + TIE_EPS or (
                obj > best_obj - TIE_EPS and branch.features < best.features
            ):
                best, best_obj = branch, obj
        if trace:
            trace(MMTraceRecord(t, "anchor", best, math.nan, best_obj))
        if best == anchor:
            break
        stalled = best_obj - anchor_obj <= config.improvement_eps
        anchor, anchor_obj = best, best_obj
        if stalled:  # early stop: the iteration no longer improves materially
            break
    polished = _objective_polish(ctx, anchor, config)
    if trace and polished != anchor:
        trace(
            MMTraceRecord(
                config.max_mm_iters + 1,
                "polish",
                polished,
                math.nan,
                rule_objective(ctx, polished),
            )
        )
    return polished
