"""Heuristic predictors: popularity, random-top-choice plurality, overlap similarity.

All three look only at training group memberships and decisions, never at
raw preference rankings. Tie breaks consume the caller's rng so runs replay.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class TrainingSummary:
    """Precomputation shared by the baselines.

    decision_counts[j] counts training groups that decided alternative j+1;
    user_groups maps a user id to [(group_index, decision), ...]; groups and
    decisions mirror the training set for overlap queries.
    """

    decision_counts: np.ndarray
    user_groups: dict
    groups: list
    decisions: list


def summarize_training(dataset):
    counts = np.zeros(dataset.num_alternatives, dtype=np.int64)
    user_groups = {}
    member_sets = []
    for gi, (g, d) in enumerate(zip(dataset.groups, dataset.decisions)):
        counts[d - 1] += 1
        for u in g.members:
            user_groups.setdefault(u, []).append((gi, d))
        member_sets.append(set(g.members))
    return TrainingSummary(
        decision_counts=counts,
        user_groups=user_groups,
        groups=member_sets,
        decisions=list(dataset.decisions),
    )


def _uniform_argmax(counts, rng):
    top = np.flatnonzero(counts == counts.max())
    if top.shape[0] == 1:
        return int(top[0])
    return int(rng.choice(top))


def pop_predict(summary, rng):
    """Most common training decision, membership-blind; ties uniform."""
    if summary.decision_counts.sum() == 0:
        raise ValueError("empty training set")
    return _uniform_argmax(summary.decision_counts, rng) + 1


def rtcp_predict(group, summary, rng):
    """Guess each member's top choice, then take the plurality winner.

    A member seen in training gets the decision of one of its training groups
    uniformly at random; unseen members fall back to the popularity pick.
    Plurality ties over the guesses break uniformly.
    """
    votes = np.zeros(summary.decision_counts.shape[0], dtype=np.int64)
    for u in group.members:
        entries = summary.user_groups.get(u)
        if entries:
            guess = entries[rng.integers(len(entries))][1]
        else:
            guess = pop_predict(summary, rng)
        votes[guess - 1] += 1
    return _uniform_argmax(votes, rng) + 1


def osim_predict(group, summary, rng):
    """Decision of the training group sharing the most members.

    Ties among maximal-overlap groups break uniformly; zero overlap with every
    training group falls back to the popularity pick.
    """
    members = set(group.members)
    overlaps = np.zeros(len(summary.groups), dtype=np.int64)
    candidates = set()
    for u in group.members:
        for gi, _ in summary.user_groups.get(u, ()):
            candidates.add(gi)
    for gi in candidates:
        overlaps[gi] = len(summary.groups[gi] & members)
    if not candidates:
        return pop_predict(summary, rng)
    best = overlaps.max()
    top = np.flatnonzero(overlaps == best)
    pick = int(top[0]) if top.shape[0] == 1 else int(rng.choice(top))
    return summary.decisions[pick]
