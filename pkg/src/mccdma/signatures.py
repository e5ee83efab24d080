"""Sparse regular signature (spreading) matrices and their factor graphs.

Each user k spreads over exactly L of the N subcarriers with chip values
+-1/sqrt(L). At full load (K = N) every subcarrier carries exactly L users;
below full load the per-subcarrier occupancy is floor(alpha*L) or
floor(alpha*L)+1 with alpha = K/N, so the bipartite user/subcarrier graph is
(near-)regular on both sides.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .rngstreams import as_generator


class SignatureGenerationError(RuntimeError):
    """Raised when no admissible support pattern is found within the retry cap."""


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite adjacency between subcarriers (PSNs) and users (OSNs).

    users_of_subcarrier[n] and subcarriers_of_user[k] are sorted index
    arrays; weights is the dense K x N edge-weight matrix (zero off support).
    """

    users_of_subcarrier: tuple
    subcarriers_of_user: tuple
    weights: np.ndarray

    @property
    def n_edges(self):
        return int(sum(len(a) for a in self.subcarriers_of_user))


@dataclass(frozen=True)
class SignatureMatrix:
    """K x N spreading matrix with L nonzeros of magnitude 1/sqrt(L) per row."""

    n_users: int
    n_subcarriers: int
    nonzeros_per_user: int
    entries: np.ndarray = field(repr=False)
    seed: object = None

    @property
    def load(self):
        return self.n_users / self.n_subcarriers

    def support_row(self, k):
        return np.flatnonzero(self.entries[k])


@dataclass(frozen=True)
class RegularityReport:
    valid: bool
    row_degrees: np.ndarray
    col_degrees: np.ndarray
    row_histogram: dict
    col_histogram: dict
    failures: tuple


def _support_pattern(n_users, n_subcarriers, nonzeros_per_user, rng,
                     max_restarts=1000):
    """Deal a row-regular, column-balanced support via pool shuffling.

    Pool holds each subcarrier floor(alpha*L) times plus a random subset once
    more so column sums land on the admissible pair of degrees; rows with a
    repeated subcarrier are repaired by random pairwise swaps.
    """
    k, n, l = n_users, n_subcarriers, nonzeros_per_user
    base = (k * l) // n
    extra = k * l - n * base
    for _ in range(max_restarts):
        pool = np.repeat(np.arange(n), base)
        if extra:
            pool = np.concatenate([pool, rng.choice(n, size=extra, replace=False)])
        rng.shuffle(pool)
        hands = pool.reshape(k, l).copy()
        if _repair_duplicates(hands, rng, max_swaps=50 * k * l + 200):
            return np.sort(hands, axis=1)
    raise SignatureGenerationError(
        f"no collision-free support after {max_restarts} restarts "
        f"(K={k}, N={n}, L={l})")


def _repair_duplicates(hands, rng, max_swaps):
    k, l = hands.shape
    for _ in range(max_swaps):
        dup_slots = []
        for u in range(k):
            seen = {}
            for j, sub in enumerate(hands[u]):
                if sub in seen:
                    dup_slots.append((u, j))
                else:
                    seen[sub] = j
        if not dup_slots:
            return True
        u, j = dup_slots[rng.integers(len(dup_slots))]
        v = int(rng.integers(k - 1))
        if v >= u:
            v += 1
        i = int(rng.integers(l))
        a, b = hands[u, j], hands[v, i]
        if b not in hands[u] and a not in hands[v]:
            hands[u, j], hands[v, i] = b, a
    return False


def generate_regular_signatures(n_users, n_subcarriers, nonzeros_per_user, seed=None):
    """Draw a sparse regular signature matrix, deterministic given seed.

    Signs are i.i.d. Rademacher, drawn after the support is fixed.
    """
    k, n, l = int(n_users), int(n_subcarriers), int(nonzeros_per_user)
    if k < 1 or n < 1 or l < 1:
        raise ValueError("n_users, n_subcarriers, nonzeros_per_user must be positive")
    if l > n:
        raise ValueError(f"cannot place L={l} distinct subcarriers among N={n}")
    if k > n:
        raise ValueError(f"overloaded system (K={k} > N={n}) is not supported")
    rng = as_generator(seed)
    support = _support_pattern(k, n, l, rng)
    signs = rng.integers(0, 2, size=(k, l)) * 2.0 - 1.0
    entries = np.zeros((k, n))
    chip = 1.0 / np.sqrt(l)
    for u in range(k):
        entries[u, support[u]] = signs[u] * chip
    entries.setflags(write=False)
    return SignatureMatrix(k, n, l, entries, seed)


def validate_regularity(signature, alpha=None):
    """Check row regularity, column balance, and chip magnitudes.

    Returns a report with per-row/column degree histograms; `valid` is True
    only if every check passes for the load alpha (defaults to K/N).
    """
    k, n, l = signature.n_users, signature.n_subcarriers, signature.nonzeros_per_user
    if alpha is None:
        alpha = k / n
    entries = signature.entries
    nz = entries != 0.0
    row_deg = nz.sum(axis=1)
    col_deg = nz.sum(axis=0)
    failures = []
    if not np.all(row_deg == l):
        failures.append(f"row degrees != {l}: {np.unique(row_deg)}")
    base = int(np.floor(alpha * l))
    allowed = {base, base + 1} if alpha < 1.0 else {l}
    bad_cols = set(np.unique(col_deg)) - allowed
    if bad_cols:
        failures.append(f"column degrees outside {sorted(allowed)}: {sorted(bad_cols)}")
    if int(col_deg.sum()) != k * l:
        failures.append("edge count mismatch")
    chip = 1.0 / np.sqrt(l)
    vals = np.abs(entries[nz])
    if vals.size and not np.all(vals == chip):
        failures.append("nonzero magnitudes differ from 1/sqrt(L)")
    return RegularityReport(
        valid=not failures,
        row_degrees=row_deg,
        col_degrees=col_deg,
        row_histogram=dict(Counter(row_deg.tolist())),
        col_histogram=dict(Counter(col_deg.tolist())),
        failures=tuple(failures),
    )


def build_factor_graph(weights):
    """Adjacency lists of the bipartite support graph of a K x N weight matrix."""
    weights = np.asarray(weights)
    nz = weights != 0
    users_of_sub = tuple(np.flatnonzero(nz[:, n]) for n in range(weights.shape[1]))
    subs_of_user = tuple(np.flatnonzero(nz[u]) for u in range(weights.shape[0]))
    return FactorGraph(users_of_sub, subs_of_user, weights)


def save_signature(signature, path):
    """Write a signature matrix in sparse triplet text form."""
    with open(path, "w") as fh:
        fh.write(f"{signature.n_users} {signature.n_subcarriers} "
                 f"{signature.nonzeros_per_user}\n")
        rows, cols = np.nonzero(signature.entries)
        for r, c in zip(rows, cols):
            fh.write(f"{r} {c} {float(signature.entries[r, c])!r}\n")


def load_signature(path):
    with open(path) as fh:
        header = fh.readline().split()
        k, n, l = (int(x) for x in header[:3])
        entries = np.zeros((k, n))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            entries[int(parts[0]), int(parts[1])] = float(parts[2])
    entries.setflags(write=False)
    return SignatureMatrix(k, n, l, entries, None)
