"""Ranked-preference election files (PrefLib-style .soi/.soc layout).

Layout, line-oriented, '#' starts a comment line:
  1. integer m (number of alternatives)
  2. m lines "label,name"
  3. "total_voters,total_vote_weight,unique_ballots"
  4. ballot lines "multiplicity,a1,a2,...,ak" with k <= m

Alternative labels are normalized to contiguous 1..m in order of the header
lines. A ballot line with count c expands to c identical voters, in file
order. Tied positions (bracketed groups) are rejected: downstream scoring
assumes strict positions.
"""

from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    """Malformed preference file; message carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Ranking:
    """One voter's (possibly partial, top-t) strict ranking.

    entries holds distinct alternative ids, most preferred first, each in
    [1, total_alternatives].
    """

    entries: tuple
    total_alternatives: int

    def __post_init__(self):
        m = self.total_alternatives
        if m < 1:
            raise ValueError("total_alternatives must be positive")
        if not 1 <= len(self.entries) <= m:
            raise ValueError(f"ranking length {len(self.entries)} outside [1, {m}]")
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("duplicate alternative in ranking")
        for a in self.entries:
            if not 1 <= a <= m:
                raise ValueError(f"alternative id {a} outside [1, {m}]")

    def __len__(self):
        return len(self.entries)

    def position_of(self, alternative):
        """1-based position of an alternative, or None if unranked."""
        if not 1 <= alternative <= self.total_alternatives:
            raise ValueError(f"alternative id {alternative} outside [1, {self.total_alternatives}]")
        try:
            return self.entries.index(alternative) + 1
        except ValueError:
            return None


@dataclass
class PreferenceProfile:
    """A universe of alternatives plus one Ranking per voter."""

    num_alternatives: int
    alternative_names: list
    voters: list

    _score_positions: np.ndarray = field(default=None, repr=False, compare=False)
    _tau_positions: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = self.num_alternatives
        if len(self.alternative_names) != m:
            raise ValueError("need exactly one name per alternative")
        if not self.voters:
            raise ValueError("profile has no voters")
        for r in self.voters:
            if r.total_alternatives != m:
                raise ValueError("ranking universe size differs from profile")

    @property
    def num_voters(self):
        return len(self.voters)

    def score_positions(self):
        """(n, m) int64 matrix of 1-based positions, 0 where unranked."""
        if self._score_positions is None:
            n, m = self.num_voters, self.num_alternatives
            pos = np.zeros((n, m), dtype=np.int64)
            for i, r in enumerate(self.voters):
                for p, a in enumerate(r.entries, start=1):
                    pos[i, a - 1] = p
            self._score_positions = pos
        return self._score_positions

    def tau_positions(self):
        """(n, m) int64 positions with unranked alternatives tied at t+1."""
        if self._tau_positions is None:
            pos = self.score_positions().copy()
            lengths = np.array([len(r) for r in self.voters], dtype=np.int64)
            unranked = pos == 0
            pos += unranked * (lengths[:, None] + 1)
            self._tau_positions = pos
        return self._tau_positions


def _content_lines(raw_text):
    for line_no, line in enumerate(raw_text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield line_no, stripped


def parse_preference_file(raw_text):
    """Parse an election file into a PreferenceProfile."""
    lines = _content_lines(raw_text)

    def next_line(expect):
        try:
            return next(lines)
        except StopIteration:
            raise ParseError(0, f"unexpected end of file, expected {expect}") from None

    line_no, text = next_line("alternative count")
    try:
        m = int(text)
    except ValueError:
        raise ParseError(line_no, f"malformed header: expected integer alternative count, got {text!r}") from None
    if m < 1:
        raise ParseError(line_no, f"malformed header: alternative count must be positive, got {m}")

    label_to_id = {}
    names = []
    for k in range(m):
        line_no, text = next_line("alternative name line")
        label, sep, name = text.partition(",")
        if not sep:
            raise ParseError(line_no, f"malformed header: expected 'label,name', got {text!r}")
        try:
            label = int(label)
        except ValueError:
            raise ParseError(line_no, f"malformed header: non-integer alternative label {label!r}") from None
        if label in label_to_id:
            raise ParseError(line_no, f"malformed header: duplicate alternative label {label}")
        label_to_id[label] = k + 1
        names.append(name.strip())

    line_no, text = next_line("voter count line")
    parts = text.split(",")
    if len(parts) != 3:
        raise ParseError(line_no, f"malformed header: expected 'voters,weight,ballots', got {text!r}")
    try:
        total_voters, _total_weight, unique_ballots = (int(p) for p in parts)
    except ValueError:
        raise ParseError(line_no, f"malformed header: non-integer count in {text!r}") from None

    voters = []
    ballot_lines = 0
    for line_no, text in lines:
        if "{" in text or "}" in text:
            raise ParseError(line_no, "tied positions (bracketed group) are not supported")
        parts = text.split(",")
        try:
            mult = int(parts[0])
        except ValueError:
            raise ParseError(line_no, f"non-integer multiplicity {parts[0]!r}") from None
        if mult <= 0:
            raise ParseError(line_no, f"multiplicity must be positive, got {mult}")
        raw_entries = [p for p in (p.strip() for p in parts[1:]) if p]
        if not raw_entries:
            raise ParseError(line_no, "ballot ranks no alternatives")
        entries = []
        for p in raw_entries:
            try:
                label = int(p)
            except ValueError:
                raise ParseError(line_no, f"non-integer alternative {p!r}") from None
            if label not in label_to_id:
                raise ParseError(line_no, f"alternative id {label} out of range")
            entries.append(label_to_id[label])
        if len(set(entries)) != len(entries):
            raise ParseError(line_no, "duplicate alternative in ranking")
        ranking = Ranking(entries=tuple(entries), total_alternatives=m)
        voters.extend([ranking] * mult)
        ballot_lines += 1

    if not voters:
        raise ParseError(0, "file contains no ballots")
    if len(voters) != total_voters:
        raise ParseError(0, f"header declares {total_voters} voters but ballots expand to {len(voters)}")
    if ballot_lines != unique_ballots:
        raise ParseError(0, f"header declares {unique_ballots} ballot lines but found {ballot_lines}")

    return PreferenceProfile(num_alternatives=m, alternative_names=names, voters=voters)


def serialize_profile(profile):
    """Render a profile back to file format; parse(serialize(p)) == p.

    Consecutive identical ballots collapse into one multiplicity line so voter
    order is preserved exactly.
    """
    out = [str(profile.num_alternatives)]
    for k, name in enumerate(profile.alternative_names, start=1):
        out.append(f"{k},{name}")

    runs = []
    for r in profile.voters:
        if runs and runs[-1][0] == r.entries:
            runs[-1][1] += 1
        else:
            runs.append([r.entries, 1])
    out.append(f"{profile.num_voters},{profile.num_voters},{len(runs)}")
    for entries, mult in runs:
        out.append(str(mult) + "," + ",".join(str(a) for a in entries))
    return "\n".join(out) + "\n"


def sample_users(profile, n, rng):
    """Sub-profile of n voters drawn uniformly without replacement."""
    if n < 1:
        raise ValueError("sample size must be positive")
    if n > profile.num_voters:
        raise ValueError(f"cannot sample {n} users from {profile.num_voters} voters")
    picks = rng.choice(profile.num_voters, size=n, replace=False)
    return PreferenceProfile(
        num_alternatives=profile.num_alternatives,
        alternative_names=list(profile.alternative_names),
        voters=[profile.voters[i] for i in picks],
    )
