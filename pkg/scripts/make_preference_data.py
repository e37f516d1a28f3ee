#!/usr/bin/env python3
"""Generate the preference files under data/.

Each dataset is a seeded mixture of Mallows components (repeated-insertion
sampling). Component centers get distinct top choices so no single
alternative dominates; two components share reversed centers so strongly
anti-correlated voter pairs exist; tight components provide highly similar
pairs. Irish-style files truncate ballots to top-t with geometric t; the
sushi-style file keeps complete rankings.

Run from the repository root:  python scripts/make_preference_data.py
"""

import os
import sys
from collections import Counter

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from deepgroup.preflib import parse_preference_file  # noqa: E402
from deepgroup.social_choice import kendall_tau  # noqa: E402

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "data")

IRISH_NAMES = [
    "Aherne", "Brady", "Callaghan", "Doyle", "Egan", "Flynn", "Gorman",
    "Hayes", "Keane", "Lynch", "Murphy", "Nolan", "O'Rourke", "Quinn",
]

SUSHI_NAMES = [
    "shrimp", "sea eel", "tuna", "squid", "sea urchin",
    "salmon roe", "egg", "fatty tuna", "tuna roll", "cucumber roll",
]

DATASETS = {
    "dublin_west": dict(
        m=9, n=29_989, names=IRISH_NAMES[:9], complete=False, seed=20_020_517,
        weights=[0.21, 0.19, 0.17, 0.16, 0.15, 0.12],
        phis=[0.15, 0.18, 0.22, 0.26, 0.45, 0.70],
        opposed=False, ballot_p=0.22,
    ),
    "dublin_north": dict(
        m=12, n=43_942, names=IRISH_NAMES[:12], complete=False, seed=20_020_518,
        weights=[0.21, 0.19, 0.17, 0.16, 0.15, 0.12],
        phis=[0.15, 0.18, 0.22, 0.26, 0.45, 0.70],
        opposed=False, ballot_p=0.22,
    ),
    "meath": dict(
        m=14, n=64_081, names=IRISH_NAMES[:14], complete=False, seed=20_020_519,
        weights=[0.21, 0.19, 0.17, 0.16, 0.15, 0.12],
        phis=[0.15, 0.18, 0.22, 0.26, 0.45, 0.70],
        opposed=False, ballot_p=0.22,
    ),
    "sushi": dict(
        m=10, n=5_000, names=SUSHI_NAMES, complete=True, seed=19_981_104,
        weights=[0.26, 0.22, 0.20, 0.18, 0.14],
        phis=[0.15, 0.17, 0.22, 0.40, 0.65],
        opposed=True, ballot_p=None,
    ),
}


def mallows_insertion_probs(phi, m):
    """probs[i][j] = P(insert i-th item at slot j), j = 0..i."""
    table = []
    for i in range(m):
        w = phi ** np.arange(i, -1, -1, dtype=np.float64)
        table.append(w / w.sum())
    return table


def sample_mallows(center, phi, count, rng):
    """Repeated-insertion sampling of `count` rankings around a center."""
    m = len(center)
    probs = mallows_insertion_probs(phi, m)
    slots = np.empty((count, m), dtype=np.int64)
    for i in range(m):
        slots[:, i] = rng.choice(i + 1, size=count, p=probs[i])
    rankings = np.empty((count, m), dtype=np.int64)
    for v in range(count):
        order = []
        for i in range(m):
            order.insert(slots[v, i], center[i])
        rankings[v] = order
    return rankings


def _no_global_favorite(centers, m):
    """Reject center sets where one item sits near the top of most centers.

    Such an item becomes a universal compromise: almost every group then picks
    it under cumulative scoring and decisions stop depending on membership.
    """
    k = len(centers)
    positions = np.empty((k, m))
    for i, c in enumerate(centers):
        for pos, item in enumerate(c, start=1):
            positions[i, item - 1] = pos
    top3 = (positions <= 3).sum(axis=0)
    return positions.mean(axis=0).min() > 3.0 and top3.max() <= max(2, round(3 * k / m))


def pick_centers(m, k, rng, opposed):
    """k centers with distinct top items and no universal compromise item.

    With opposed=True the second center strongly anti-correlates with the
    first (tau <= -0.75), so strongly dissimilar voter pairs exist.
    """
    while True:
        centers = [rng.permutation(m) + 1]
        if opposed:
            while True:
                cand = rng.permutation(m) + 1
                disc = sum(
                    1
                    for i in range(m)
                    for j in range(i + 1, m)
                    if (list(centers[0]).index(i + 1) - list(centers[0]).index(j + 1))
                    * (list(cand).index(i + 1) - list(cand).index(j + 1))
                    < 0
                )
                n0 = m * (m - 1) // 2
                if 1 - 2 * disc / n0 <= -0.75 and cand[0] != centers[0][0]:
                    centers.append(cand)
                    break
        while len(centers) < k:
            cand = rng.permutation(m) + 1
            if all(cand[0] != c[0] for c in centers):
                centers.append(cand)
        if len({int(c[0]) for c in centers}) == k and _no_global_favorite(centers, m):
            return centers


def generate(spec):
    rng = np.random.default_rng(spec["seed"])
    m, n = spec["m"], spec["n"]
    weights = np.asarray(spec["weights"], dtype=np.float64)
    weights = weights / weights.sum()
    centers = pick_centers(m, len(weights), rng, spec["opposed"])
    counts = rng.multinomial(n, weights)
    blocks = [
        sample_mallows(center, phi, count, rng)
        for center, phi, count in zip(centers, spec["phis"], counts)
    ]
    rankings = np.concatenate(blocks, axis=0)
    rankings = rankings[rng.permutation(n)]

    if spec["complete"]:
        ballots = [tuple(row) for row in rankings]
    else:
        lengths = np.clip(rng.geometric(spec["ballot_p"], size=n), 1, m)
        ballots = [tuple(row[:t]) for row, t in zip(rankings, lengths)]
    return ballots


def write_file(name, spec, ballots):
    tallies = Counter(ballots)
    lines = [
        f"# synthetic preference data (matched to the published size of '{name}')",
        "# generated by scripts/make_preference_data.py; do not edit by hand",
        str(spec["m"]),
    ]
    for i, label in enumerate(spec["names"], start=1):
        lines.append(f"{i},{label}")
    lines.append(f"{len(ballots)},{len(ballots)},{len(tallies)}")
    for ballot, count in sorted(tallies.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(str(count) + "," + ",".join(str(a) for a in ballot))
    ext = "soc" if spec["complete"] else "soi"
    path = os.path.join(OUT_DIR, f"{name}.{ext}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def describe(path):
    with open(path, "r", encoding="utf-8") as fh:
        profile = parse_preference_file(fh.read())
    n, m = profile.num_voters, profile.num_alternatives
    tops = Counter(r.entries[0] for r in profile.voters)
    top_share = max(tops.values()) / n
    rng = np.random.default_rng(0)
    pairs = rng.integers(0, n, size=(3000, 2))
    taus = np.array([
        kendall_tau(profile.voters[a], profile.voters[b])
        for a, b in pairs if a != b
    ])
    print(
        f"{os.path.basename(path)}: n={n} m={m} max_top_share={top_share:.3f} "
        f"P(tau>=0.5)={np.mean(taus >= 0.5):.3f} P(tau<=-0.5)={np.mean(taus <= -0.5):.3f} "
        f"mean_len={np.mean([len(r) for r in profile.voters]):.2f}"
    )


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    for name, spec in DATASETS.items():
        ballots = generate(spec)
        path = write_file(name, spec, ballots)
        describe(path)


if __name__ == "__main__":
    main()
