"""Leakage-controlled train/val/test assignment.

Two complexes may share a split freely; they MUST share a split when their
receptor sequence identity exceeds ``seq_hi`` (default 0.5), or when it
exceeds ``seq_lo`` (default 0.4) and their ligand Tanimoto similarity is
above ``tani`` (default 0.9). Linked pairs are closed transitively into
clusters (connected components over a union-find), and whole clusters are
assigned to splits, so no linked pair ever straddles a split boundary.

Sequence identity uses global alignment with match +1, mismatch 0, and a
linear gap penalty of -0.5, maximizing the score; identity is matches
divided by alignment length, read from a deterministic
(diagonal-preferring) traceback. Alignments are memoized on canonically
ordered sequence pairs, and a composition upper bound skips alignments
that cannot reach ``seq_lo``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError

__all__ = [
    "ComplexMeta",
    "Fingerprint",
    "SplitAssignment",
    "LeakageReport",
    "sequence_identity",
    "tanimoto",
    "build_linkage",
    "assign_splits",
    "verify_no_leakage",
    "subset",
    "UnionFind",
]

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
GAP_PENALTY = -0.5
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width molecular fingerprint bitset."""

    bits: int
    width: int

    def __post_init__(self):
        if self.width <= 0:
            raise ArgumentError(f"fingerprint width must be positive, got {self.width}")
        if self.bits < 0 or self.bits >> self.width:
            raise ArgumentError("fingerprint bits exceed the declared width")

    @classmethod
    def from_hex(cls, hex_string: str) -> "Fingerprint":
        s = hex_string.strip()
        if not s:
            raise ArgumentError("empty fingerprint hex string")
        try:
            bits = int(s, 16)
        except ValueError:
            raise ArgumentError(f"invalid fingerprint hex {hex_string!r}") from None
        return cls(bits, 4 * len(s))

    def to_hex(self) -> str:
        return format(self.bits, f"0{(self.width + 3) // 4}x")


@dataclass(frozen=True)
class ComplexMeta:
    """Split-relevant metadata of one complex: sequence, fingerprint, label."""

    id: str
    receptor_sequence: str | None = None
    fingerprint: Fingerprint | None = None
    label: float = 0.0

    def __post_init__(self):
        if self.receptor_sequence is not None:
            seq = self.receptor_sequence
            bad = set(seq) - set(AMINO_ACIDS)
            if not seq or bad:
                raise ArgumentError(
                    f"complex {self.id!r}: sequence must be non-empty over "
                    f"{AMINO_ACIDS}, offending characters {sorted(bad)}"
                )


def _align_score_and_identity(a: str, b: str) -> float:
    """Needleman-Wunsch with the module scoring; returns matches / length."""
    la, lb = len(a), len(b)
    # score DP in float64; gap moves encoded for the traceback
    m = np.zeros((la + 1, lb + 1), dtype=np.float64)
    m[0, :] = GAP_PENALTY * np.arange(lb + 1)
    m[:, 0] = GAP_PENALTY * np.arange(la + 1)
    b_arr = np.frombuffer(b.encode("ascii"), dtype=np.uint8)
    j_idx = np.arange(1, lb + 1)
    for i in range(1, la + 1):
        match = (b_arr == ord(a[i - 1])).astype(np.float64)
        diag = m[i - 1, :-1] + match
        up = m[i - 1, 1:] + GAP_PENALTY
        cand = np.maximum(diag, up)
        # left moves have a linear penalty, so the row is a running max of
        # cand[j] + 0.5*j shifted back by 0.5*j
        u = np.maximum.accumulate(cand + 0.5 * j_idx)
        m[i, 1:] = u - 0.5 * j_idx

    # deterministic traceback: prefer diagonal, then up, then left
    i, j = la, lb
    matches = 0
    length = 0
    while i > 0 or j > 0:
        here = m[i, j]
        if i > 0 and j > 0 and here == m[i - 1, j - 1] + (1.0 if a[i - 1] == b[j - 1] else 0.0):
            matches += a[i - 1] == b[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and here == m[i - 1, j] + GAP_PENALTY:
            i -= 1
        else:
            j -= 1
        length += 1
    return matches / length


def sequence_identity(a: str, b: str, _memo: dict | None = None) -> float:
    """Fraction of matching residues in an optimal global alignment."""
    if not a or not b:
        raise ArgumentError("sequence_identity requires two non-empty sequences")
    key = (a, b) if a <= b else (b, a)
    if _memo is not None and key in _memo:
        return _memo[key]
    value = _align_score_and_identity(*key)
    if _memo is not None:
        _memo[key] = value
    return value


def _identity_upper_bound(a: str, b: str) -> float:
    """Cheap bound: matches <= shared composition, length >= max(len)."""
    from collections import Counter

    ca, cb = Counter(a), Counter(b)
    shared = sum(min(ca[k], cb[k]) for k in ca)
    return shared / max(len(a), len(b))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; 1.0 when both fingerprints are empty."""
    if a.width != b.width:
        raise ArgumentError(
            f"fingerprint widths differ: {a.width} vs {b.width}"
        )
    union = a.bits | b.bits
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union.bit_count()


class UnionFind:
    """Disjoint sets over ids with union by size and path compression."""

    def __init__(self, items):
        self._parent = {x: x for x in items}
        self._size = {x: 1 for x in self._parent}

    def find(self, x):
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]

    def clusters(self) -> list[list]:
        groups: dict = {}
        for x in self._parent:
            groups.setdefault(self.find(x), []).append(x)
        return list(groups.values())


def _linked(a: ComplexMeta, b: ComplexMeta, seq_hi: float, seq_lo: float,
            tani: float, memo: dict) -> bool:
    """The co-assignment rule for one pair."""
    if a.receptor_sequence is None or b.receptor_sequence is None:
        return False
    tani_sim = (
        tanimoto(a.fingerprint, b.fingerprint)
        if a.fingerprint is not None and b.fingerprint is not None
        else 0.0
    )
    threshold = seq_lo if tani_sim > tani else seq_hi
    if _identity_upper_bound(a.receptor_sequence, b.receptor_sequence) <= threshold:
        return False
    return sequence_identity(a.receptor_sequence, b.receptor_sequence, memo) > threshold


def build_linkage(items: list[ComplexMeta], seq_hi: float = 0.5, seq_lo: float = 0.4,
                  tani: float = 0.9) -> list[list[str]]:
    """Connected components of the must-co-assign relation.

    An undirected edge joins i and j iff sequence identity > seq_hi, or
    sequence identity > seq_lo and Tanimoto similarity > tani. Returns the
    clusters as lists of ids (every item appears in exactly one cluster).
    """
    for name, v in (("seq_hi", seq_hi), ("seq_lo", seq_lo), ("tani", tani)):
        if not 0.0 <= v <= 1.0:
            raise ArgumentError(f"threshold {name} must be in [0, 1], got {v}")
    if seq_lo > seq_hi:
        raise ArgumentError(f"seq_lo {seq_lo} must not exceed seq_hi {seq_hi}")
    ids = [it.id for it in items]
    if len(set(ids)) != len(ids):
        raise ArgumentError("duplicate complex ids in linkage input")

    uf = UnionFind(ids)
    memo: dict = {}
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if _linked(items[i], items[j], seq_hi, seq_lo, tani, memo):
                uf.union(items[i].id, items[j].id)
    return uf.clusters()


@dataclass(frozen=True)
class SplitAssignment:
    """id -> split map plus the provenance that produced it."""

    assignment: dict[str, str]
    provenance: dict = field(default_factory=dict)

    def ids(self, split: str) -> list[str]:
        return [i for i, s in self.assignment.items() if s == split]

    def to_json(self) -> str:
        doc = {"provenance": self.provenance, "assignment": self.assignment}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "SplitAssignment":
        doc = json.loads(Path(path).read_text())
        return cls(doc["assignment"], doc.get("provenance", {}))


def assign_splits(clusters: list[list[str]], fractions: tuple[float, float, float],
                  pinned_test: set[str] | None = None, seed: int = 0,
                  thresholds: dict | None = None) -> SplitAssignment:
    """Pack whole clusters into train/val/test near the target fractions.

    Clusters containing a pinned id go to test. The rest are shuffled by
    ``seed``, ordered largest-first, and each goes to the split whose
    filled fraction is currently furthest below its target. Clusters are
    never divided.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ArgumentError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ArgumentError(f"fractions must sum to 1, got {sum(fractions)}")
    pinned = set(pinned_test or ())
    all_ids = {i for cluster in clusters for i in cluster}
    unknown = pinned - all_ids
    if unknown:
        raise ArgumentError(f"pinned ids not present in any cluster: {sorted(unknown)}")

    total = sum(len(c) for c in clusters)
    assignment: dict[str, str] = {}
    counts = dict.fromkeys(SPLITS, 0)

    free: list[list[str]] = []
    for cluster in clusters:
        if pinned & set(cluster):
            for i in cluster:
                assignment[i] = "test"
            counts["test"] += len(cluster)
        else:
            free.append(sorted(cluster))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(free))
    shuffled = [free[k] for k in order]
    shuffled.sort(key=len, reverse=True)  # stable: seed decides ties

    targets = dict(zip(SPLITS, fractions))
    for cluster in shuffled:
        deficits = {s: targets[s] - counts[s] / total for s in SPLITS}
        dest = max(SPLITS, key=lambda s: deficits[s])
        for i in cluster:
            assignment[i] = dest
        counts[dest] += len(cluster)

    achieved = {s: counts[s] / total if total else 0.0 for s in SPLITS}
    provenance = {
        "fractions": dict(zip(SPLITS, fractions)),
        "achieved": achieved,
        "deviation": {s: achieved[s] - targets[s] for s in SPLITS},
        "seed": seed,
        "pinned_test": sorted(pinned),
        "n_items": total,
        "n_clusters": len(clusters),
    }
    if thresholds:
        provenance["thresholds"] = dict(thresholds)
    return SplitAssignment(assignment, provenance)


@dataclass(frozen=True)
class LeakageReport:
    """Cross-split pairs that violate the co-assignment rule."""

    violations: tuple[dict, ...]
    pairs_checked: int

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        doc = {
            "pairs_checked": self.pairs_checked,
            "violations": list(self.violations),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def verify_no_leakage(assignment: SplitAssignment, items: list[ComplexMeta],
                      seq_hi: float = 0.5, seq_lo: float = 0.4,
                      tani: float = 0.9) -> LeakageReport:
    """Exhaustively scan cross-split pairs for rule violations."""
    memo: dict = {}
    violations = []
    checked = 0
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i], items[j]
            sa = assignment.assignment.get(a.id)
            sb = assignment.assignment.get(b.id)
            if sa is None or sb is None or sa == sb:
                continue
            checked += 1
            if _linked(a, b, seq_hi, seq_lo, tani, memo):
                tani_sim = (
                    tanimoto(a.fingerprint, b.fingerprint)
                    if a.fingerprint is not None and b.fingerprint is not None
                    else 0.0
                )
                violations.append({
                    "id_a": a.id,
                    "id_b": b.id,
                    "split_a": sa,
                    "split_b": sb,
                    "sequence_identity": sequence_identity(
                        a.receptor_sequence, b.receptor_sequence, memo
                    ),
                    "tanimoto": tani_sim,
                })
    return LeakageReport(tuple(violations), checked)


def subset(train_ids: list[str], fraction: float, seed: int = 0) -> list[str]:
    """Uniform sample without replacement of max(1, round(fraction * n)) ids.

    Sampling takes a prefix of one seed-determined shuffle, so subsets are
    nested across fractions at a fixed seed.
    """
    if not train_ids:
        raise ArgumentError("subset of an empty id list")
    if not 0.0 < fraction <= 1.0:
        raise ArgumentError(f"fraction must be in (0, 1], got {fraction}")
    n = len(train_ids)
    k = max(1, round(fraction * n))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    return [train_ids[i] for i in order[:k]]
