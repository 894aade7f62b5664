"""Wave-vector bookkeeping for truncated Fourier spaces on [0, 2pi]^d.

Fields are stored on a canonical half lattice: one representative per
conjugate pair {k, -k}, namely the one whose first nonzero component is
positive.  The coefficient at -k is the complex conjugate of the stored one.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np


class EmptySpaceError(ValueError):
    pass


def is_canonical(k: Sequence[int]) -> bool:
    for c in k:
        if c != 0:
            return c > 0
    return False


def canonical(k: Sequence[int]) -> tuple[int, ...]:
    k = tuple(int(c) for c in k)
    if not any(k):
        raise ValueError("zero wave vector has no canonical representative")
    return k if is_canonical(k) else tuple(-c for c in k)


class ModeSet:
    """Ordered set of canonical wave vectors spanning a Galerkin space.

    ``modes`` is an (M, d) integer array sorted lexicographically.  The
    full lattice used by the convolution is ``modes`` followed by
    ``-modes``, so full index ``p`` refers to ``modes[p]`` for ``p < M`` and
    to ``-modes[p - M]`` otherwise.
    """

    def __init__(self, dimension: int, modes: Iterable[Sequence[int]], lambda_cut: float | None = None):
        if dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {dimension}")
        canon = sorted({canonical(k) for k in modes})
        if not canon:
            raise EmptySpaceError("empty Galerkin space")
        for k in canon:
            if len(k) != dimension:
                raise ValueError(f"wave vector {k} does not have {dimension} components")
        self.dimension = dimension
        self.modes = np.array(canon, dtype=np.int64)
        self.modes.setflags(write=False)
        sq = (self.modes**2).sum(axis=1)
        self.lambda_cut = float(sq.max()) if lambda_cut is None else float(lambda_cut)
        self._index = {k: i for i, k in enumerate(canon)}
        self._triads = None

    # -- basic queries -------------------------------------------------
    def __len__(self) -> int:
        return len(self.modes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModeSet):
            return NotImplemented
        return self is other or (
            self.dimension == other.dimension and np.array_equal(self.modes, other.modes)
        )

    def __hash__(self) -> int:
        return hash((self.dimension, self.modes.tobytes()))

    def __repr__(self) -> str:
        return f"ModeSet(d={self.dimension}, lambda={self.lambda_cut:g}, modes={len(self)})"

    @property
    def n_real(self) -> int:
        """Number of real unknowns: 2*d per canonical mode."""
        return 2 * self.dimension * len(self)

    @property
    def k_squared(self) -> np.ndarray:
        return (self.modes**2).sum(axis=1).astype(float)

    @property
    def full_modes(self) -> np.ndarray:
        return np.concatenate([self.modes, -self.modes])

    def index(self, k: Sequence[int]) -> tuple[int, bool]:
        """Return (canonical index, conjugated) for a nonzero wave vector.

        Raises KeyError if neither k nor -k belongs to the set.
        """
        k = tuple(int(c) for c in k)
        c = canonical(k)
        return self._index[c], c != k

    def __contains__(self, k: Sequence[int]) -> bool:
        try:
            self.index(k)
        except (KeyError, ValueError):
            return False
        return True

    def full_index(self, k: Sequence[int]) -> int:
        i, conj = self.index(k)
        return i + len(self) if conj else i

    # -- convolution triads ---------------------------------------------
    def triads(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Index triples (t, p, q) with modes[t] = full[p] + full[q].

        ``t`` indexes canonical targets; ``p`` and ``q`` index the full
        lattice.  Every ordered pair of full-lattice vectors summing to a
        canonical target appears exactly once.
        """
        if self._triads is None:
            full = self.full_modes
            lookup = {tuple(k): p for p, k in enumerate(full.tolist())}
            ts, ps, qs = [], [], []
            for t, k in enumerate(self.modes.tolist()):
                for p, j in enumerate(full.tolist()):
                    q = lookup.get(tuple(a - b for a, b in zip(k, j)))
                    if q is not None:
                        ts.append(t)
                        ps.append(p)
                        qs.append(q)
            arrs = tuple(np.array(x, dtype=np.int64) for x in (ts, ps, qs))
            for a in arrs:
                a.setflags(write=False)
            self._triads = arrs
        return self._triads


def enumerate_modes(dimension: int, lambda_cut: float) -> ModeSet:
    """All canonical k in Z^d with 0 < |k|^2 <= lambda_cut."""
    if dimension not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dimension}")
    if lambda_cut < 1:
        raise EmptySpaceError("empty Galerkin space")
    r = int(math.isqrt(int(math.floor(lambda_cut))))
    rng = range(-r, r + 1)
    modes = [
        k
        for k in itertools.product(rng, repeat=dimension)
        if is_canonical(k) and sum(c * c for c in k) <= lambda_cut
    ]
    return ModeSet(dimension, modes, lambda_cut=lambda_cut)


def custom_modes(dimension: int, vectors: Iterable[Sequence[int]]) -> ModeSet:
    """Mode set E[K] for an arbitrary symmetric K (only one of +-k needed)."""
    return ModeSet(dimension, vectors)
