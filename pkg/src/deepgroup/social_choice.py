"""Positional scoring rules, group decisions, and rank correlation.

Scores follow the top-t convention: alternatives missing from a partial
ballot score 0 under both rules. Kendall tau is the tie-aware tau-b, with a
ballot's unranked alternatives tied at position t+1.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

RULE_KINDS = ("borda", "plurality", "mixture")

_RULE_ALIASES = {
    "borda": "borda",
    "plurality": "plurality",
    "mixture": "mixture",
    "mixturebordaplurality": "mixture",
    "mix": "mixture",
}


@dataclass(frozen=True)
class DecisionRule:
    """A group decision rule; "mixture" flips a fair coin per group."""

    kind: str

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}, expected one of {RULE_KINDS}")

    @classmethod
    def parse(cls, text):
        key = text.strip().lower().replace("-", "").replace("_", "")
        if key not in _RULE_ALIASES:
            raise ValueError(f"unknown decision rule {text!r}")
        return cls(_RULE_ALIASES[key])


def resolve_rule(rule, rng):
    """Concrete rule for one group: mixture picks borda/plurality with prob 1/2."""
    if rule.kind != "mixture":
        return rule.kind
    return "borda" if rng.random() < 0.5 else "plurality"


def borda_score(ranking, alternative):
    """m - position for ranked alternatives, 0 for unranked ones."""
    pos = ranking.position_of(alternative)
    if pos is None:
        return 0
    return ranking.total_alternatives - pos


def plurality_score(ranking, alternative):
    """1 iff the alternative is the ballot's top choice."""
    return 1 if ranking.position_of(alternative) == 1 else 0


def score_vector(ranking, kind):
    """Scores of every alternative under one ballot, index a-1 for id a."""
    m = ranking.total_alternatives
    scores = np.zeros(m, dtype=np.int64)
    if kind == "borda":
        for pos, a in enumerate(ranking.entries, start=1):
            scores[a - 1] = m - pos
    elif kind == "plurality":
        scores[ranking.entries[0] - 1] = 1
    else:
        raise ValueError(f"not a positional rule kind: {kind!r}")
    return scores


def tally(members, kind):
    """Cumulative score vector of a group's ballots."""
    if not members:
        raise ValueError("group has no members")
    m = members[0].total_alternatives
    total = np.zeros(m, dtype=np.int64)
    for r in members:
        if r.total_alternatives != m:
            raise ValueError("rankings disagree on the number of alternatives")
        total += score_vector(r, kind)
    return total


def argmax_alternatives(scores):
    """All alternative ids attaining the maximum cumulative score."""
    return [int(a) + 1 for a in np.flatnonzero(scores == scores.max())]


def group_decision(members, rule, rng):
    """Highest-cumulative-score alternative; ties broken uniformly at random.

    Under the mixture rule the concrete rule is drawn first, then the tie (if
    any) is broken, so one call consumes a fixed, replayable rng pattern.
    """
    kind = resolve_rule(rule, rng)
    winners = argmax_alternatives(tally(members, kind))
    if len(winners) == 1:
        return winners[0]
    return int(rng.choice(winners))


def _tau_encoded_positions(ranking):
    m = ranking.total_alternatives
    pos = np.full(m, len(ranking.entries) + 1, dtype=np.int64)
    for p, a in enumerate(ranking.entries, start=1):
        pos[a - 1] = p
    return pos


def kendall_tau(r1, r2):
    """Tau-b correlation of two ballots over the same alternative universe.

    Unranked alternatives are tied at the bottom; pairs tied in either ballot
    are excluded from the concordant/discordant counts and absorbed by the
    tau-b normalization.
    """
    if r1.total_alternatives != r2.total_alternatives:
        raise ValueError("rankings disagree on the number of alternatives")
    m = r1.total_alternatives
    nc, nd, n1, n2 = kernels.tau_pair_counts(_tau_encoded_positions(r1), _tau_encoded_positions(r2))
    n0 = m * (m - 1) // 2
    den = float(n0 - n1) * float(n0 - n2)
    if den <= 0.0:
        raise ValueError("kendall tau undefined: one ranking ties every pair")
    return float((nc - nd) / np.sqrt(den))
