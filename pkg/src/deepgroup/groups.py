"""Synthesize group sets and their decisions from a preference profile.

Three generators:
  kpg  - repeat kappa times: shuffle the users and cut them into chunks with
         sizes in [s_min, s_max]; keep the union of unique chunks.
  rsg  - rejection-sample groups whose members are pairwise similar
         (all Kendall tau >= tau_sim).
  rdg  - rejection-sample pairwise-dissimilar groups (all tau <= tau_dis).

Member ids are 0-based indices into the profile's voter list; decisions are
1-based alternative ids.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .social_choice import argmax_alternatives, resolve_rule, tally

SYNTH_METHODS = ("kpg", "rsg", "rdg")

# Consecutive rejected draws before rsg/rdg gives up on the profile.
REJECTION_BUDGET = 10_000


@dataclass(frozen=True)
class Group:
    """A set of users, stored as a sorted tuple of voter indices."""

    members: tuple

    def __post_init__(self):
        if not self.members:
            raise ValueError("group has no members")
        ordered = tuple(sorted(self.members))
        if len(set(ordered)) != len(ordered):
            raise ValueError("duplicate member in group")
        object.__setattr__(self, "members", ordered)

    def __len__(self):
        return len(self.members)


@dataclass
class SynthConfig:
    method: str
    kappa: int = None  # kpg only
    num_groups: int = None  # rsg/rdg target group count
    s_min: int = 2
    s_max: int = 10
    tau_sim: float = 0.5
    tau_dis: float = -0.5
    seed: int = 0

    def __post_init__(self):
        if self.method not in SYNTH_METHODS:
            raise ValueError(f"unknown synthesis method {self.method!r}")
        if not 2 <= self.s_min <= self.s_max:
            raise ValueError(f"need 2 <= s_min <= s_max, got [{self.s_min}, {self.s_max}]")
        if self.method == "kpg" and (self.kappa is None or self.kappa < 1):
            raise ValueError("kpg requires kappa >= 1")
        if self.method in ("rsg", "rdg") and (self.num_groups is None or self.num_groups < 1):
            raise ValueError(f"{self.method} requires num_groups >= 1")


@dataclass
class GroupDataset:
    """Groups plus one decision per group (row-wise one-hot interactions)."""

    groups: list
    decisions: list
    num_alternatives: int
    method: str = "unknown"
    rule: str = "unknown"
    seed: int = 0
    rule_used: list = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.groups) != len(self.decisions):
            raise ValueError("need exactly one decision per group")
        if len({g.members for g in self.groups}) != len(self.groups):
            raise ValueError("groups must be pairwise distinct as sets")
        for d in self.decisions:
            if not 1 <= d <= self.num_alternatives:
                raise ValueError(f"decision {d} outside [1, {self.num_alternatives}]")

    def __len__(self):
        return len(self.groups)


def _partition_once(profile, config, rng):
    """One random partition of all users into chunks with sizes in bounds."""
    n = profile.num_voters
    order = list(rng.permutation(n))
    chunks = []
    i = 0
    while i < n:
        size = int(rng.integers(config.s_min, config.s_max + 1))
        chunks.append(order[i:i + size])
        i += size
    if len(chunks) > 1 and len(chunks[-1]) < config.s_min:
        # merge the short remainder, then shed members until bounds hold
        rem = chunks.pop()
        chunks[-1] = chunks[-1] + rem
        while len(chunks[-1]) > config.s_max:
            target = next((c for c in chunks[:-1] if len(c) < config.s_max), None)
            if target is not None:
                target.append(chunks[-1].pop())
                continue
            big = chunks.pop()
            cut = len(big) // 2
            if cut < config.s_min or len(big) - cut < config.s_min:
                raise ValueError(
                    f"cannot partition {n} users into sizes in [{config.s_min}, {config.s_max}]"
                )
            chunks.extend([big[:cut], big[cut:]])
            break
    return chunks


def kpg_generate(profile, config, rng):
    """Union of unique groups over kappa independent random partitions."""
    if config.method != "kpg":
        raise ValueError(f"config method is {config.method!r}, not kpg")
    if profile.num_voters < config.s_min:
        raise ValueError(f"cannot form any group: {profile.num_voters} users < s_min={config.s_min}")
    groups = []
    seen = set()
    for _ in range(config.kappa):
        for chunk in _partition_once(profile, config, rng):
            key = tuple(sorted(chunk))
            if key not in seen:
                seen.add(key)
                groups.append(Group(members=key))
    return groups


def rsg_rdg_generate(profile, config, rng):
    """Rejection-sample num_groups groups passing the pairwise-tau screen.

    Draws with an undefined member-pair tau, or duplicating an accepted group,
    are rejected. Aborts after REJECTION_BUDGET consecutive rejections: the
    profile then cannot support the threshold at these sizes.
    """
    if config.method not in ("rsg", "rdg"):
        raise ValueError(f"config method is {config.method!r}, not rsg/rdg")
    n = profile.num_voters
    if n < config.s_min:
        raise ValueError(f"cannot form any group: {n} users < s_min={config.s_min}")
    require_at_least = config.method == "rsg"
    threshold = config.tau_sim if require_at_least else config.tau_dis
    positions = np.ascontiguousarray(profile.tau_positions())
    s_max = min(config.s_max, n)

    groups = []
    seen = set()
    consecutive = 0
    while len(groups) < config.num_groups:
        if consecutive >= REJECTION_BUDGET:
            raise RuntimeError(
                f"{config.method} gave up after {REJECTION_BUDGET} consecutive rejections "
                f"({len(groups)}/{config.num_groups} groups accepted): the profile cannot "
                f"support tau threshold {threshold} at sizes [{config.s_min}, {s_max}]"
            )
        size = int(rng.integers(config.s_min, s_max + 1))
        key = tuple(sorted(rng.choice(n, size=size, replace=False).tolist()))
        if key in seen:
            consecutive += 1
            continue
        code = kernels.check_group_tau(positions[list(key)], threshold, require_at_least)
        if code == kernels.TAU_ACCEPT:
            seen.add(key)
            groups.append(Group(members=key))
            consecutive = 0
        else:
            consecutive += 1
    return groups


def generate_groups(profile, config, rng):
    if config.method == "kpg":
        return kpg_generate(profile, config, rng)
    return rsg_rdg_generate(profile, config, rng)


def assign_decisions(groups, profile, rule, rng, method="unknown", seed=0):
    """Aggregate each group's ballots into one decision under the rule.

    Per group: resolve the rule (coin flip under mixture), tally, then break
    score ties uniformly, consuming the rng in that fixed order.
    """
    decisions = []
    rule_used = []
    for g in groups:
        members = [profile.voters[i] for i in g.members]
        kind = resolve_rule(rule, rng)
        winners = argmax_alternatives(tally(members, kind))
        decision = winners[0] if len(winners) == 1 else int(rng.choice(winners))
        decisions.append(decision)
        rule_used.append(kind)
    return GroupDataset(
        groups=list(groups),
        decisions=decisions,
        num_alternatives=profile.num_alternatives,
        method=method,
        rule=rule.kind,
        seed=seed,
        rule_used=rule_used,
    )


def serialize_group_dataset(dataset):
    """Line format: header "l m method rule seed", then "u,u,... -> d"."""
    out = [
        f"{len(dataset)} {dataset.num_alternatives} {dataset.method} {dataset.rule} {dataset.seed}"
    ]
    for g, d in zip(dataset.groups, dataset.decisions):
        out.append(",".join(str(u) for u in g.members) + " -> " + str(d))
    return "\n".join(out) + "\n"


def parse_group_dataset(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty group dataset file")
    header = lines[0].split()
    if len(header) != 5:
        raise ValueError(f"malformed header {lines[0]!r}")
    count, m = int(header[0]), int(header[1])
    method, rule, seed = header[2], header[3], int(header[4])
    if len(lines) - 1 != count:
        raise ValueError(f"header declares {count} groups but file has {len(lines) - 1}")
    groups = []
    decisions = []
    for ln in lines[1:]:
        left, sep, right = ln.partition("->")
        if not sep:
            raise ValueError(f"malformed group line {ln!r}")
        groups.append(Group(members=tuple(int(u) for u in left.strip().split(","))))
        decisions.append(int(right.strip()))
    return GroupDataset(
        groups=groups,
        decisions=decisions,
        num_alternatives=m,
        method=method,
        rule=rule,
        seed=seed,
    )
