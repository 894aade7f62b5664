"""Strict unitary expansions of finite vector sequences.

Given v_1, ..., v_N the extraction follows the constructive recursion

    gamma_n^(k) = ||w_n^(k-1) - w_{k-1}||_Z,
    w_n^(k)     = (w_n^(k-1) - w_{k-1}) / gamma_n^(k),
    Gamma_{k,n} = gamma_n^(1) ... gamma_n^(k),

with w_n^(0) = v_n and w_0 = v.  True limits are unknown on finite data;
by default the last retained element stands in for each limit and is then
dropped from the retained indices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from nsasym.field import SpectralField, _check_same, read_field, write_field

TRIVIAL_THRESHOLD = 1e-13
STAGNATION_TOL = 1e-12
TAIL_FRACTION = 0.05
OSCILLATION_RATIO = 0.5
ROUNDING_SAFETY = 10.0
EPS = float(np.finfo(float).eps)
REJECT_MESSAGE = "no convergent subsequence at this depth; subsequence selection required"


class ExpansionError(ValueError):
    pass


@dataclass
class ExpansionLevel:
    """One level k of the recursion, stored over its own retained indices."""

    k: int
    indices: np.ndarray          # positions into the input sequence
    gamma: np.ndarray            # gamma_n^(k)
    Gamma: np.ndarray            # Gamma_{k,n}
    directions: list[SpectralField]  # w_n^(k)
    w: SpectralField             # w_k (limit proxy)
    padded: np.ndarray           # True where w_n^(k) - w_{k-1} vanished exactly

    def at(self, positions: np.ndarray) -> np.ndarray:
        """Gamma_{k,n} at the given sequence positions (must be retained here)."""
        lookup = {int(i): j for j, i in enumerate(self.indices)}
        return self.Gamma[[lookup[int(p)] for p in positions]]


@dataclass
class UnitaryExpansion:
    v: SpectralField
    levels: list[ExpansionLevel]
    kind: str                       # trivial | finite | truncated
    retained_indices: np.ndarray    # positions kept by every level
    alphas: np.ndarray | None = None
    diagnostic: str = ""
    policy: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def directions(self) -> list[SpectralField]:
        return [lv.w for lv in self.levels]

    def Gamma(self, k: int) -> np.ndarray:
        """Gamma_{k,n} on ``retained_indices``; Gamma_0 is identically 1."""
        if k == 0:
            return np.ones(len(self.retained_indices))
        return self.levels[k - 1].at(self.retained_indices)

    def retained_alphas(self) -> np.ndarray:
        if self.alphas is None:
            raise ExpansionError("expansion carries no alpha values")
        return np.asarray(self.alphas)[self.retained_indices]

    def padded_gamma(self, n_total: int | None = None) -> np.ndarray:
        """Rectangular (n, K) table of Gamma_{k,n} over every level-0 position.

        Entries a level does not carry (limit proxies it consumed, or exact
        zeros) follow the zero-remainder rule Gamma_{k,n} = 2^{-nk} Gamma_{k-1,n},
        with n the 1-based sequence position.
        """
        base = self.policy.get("level0_indices")
        pos = np.asarray(base if base is not None else self.retained_indices)
        out = np.empty((len(pos), self.depth))
        prev = np.ones(len(pos))
        for k, lv in enumerate(self.levels, start=1):
            lookup = {int(i): j for j, i in enumerate(lv.indices)}
            col = np.empty(len(pos))
            for r, p in enumerate(pos):
                j = lookup.get(int(p))
                if j is not None and not lv.padded[j]:
                    col[r] = lv.Gamma[j]
                else:
                    col[r] = 2.0 ** (-(int(p) + 1) * k) * prev[r]
            out[:, k - 1] = col
            prev = col
        return out

    def reconstruct(self, position: int, k: int) -> SpectralField:
        """v + sum_{j<k} Gamma_{j,n} w_j + Gamma_{k,n} w_n^(k) at a retained position."""
        out = self.v
        for j in range(1, k):
            out = out + self.levels[j - 1].at(np.array([position]))[0] * self.levels[j - 1].w
        lv = self.levels[k - 1]
        idx = int(np.nonzero(lv.indices == position)[0][0])
        return out + lv.Gamma[idx] * lv.directions[idx]

    # -- IO --
    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_field(d / "limit.sf", self.v)
        for k, lv in enumerate(self.levels, start=1):
            write_field(d / f"w_{k}.sf", lv.w)
        alphas = self.alphas
        with open(d / "gamma.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "alpha"] + [f"gamma{k}" for k in range(1, self.depth + 1)])
            lookups = [{int(i): j for j, i in enumerate(lv.indices)} for lv in self.levels]
            for p in self.retained_indices:
                a = alphas[p] if alphas is not None else float("nan")
                row = [int(p), f"{a:.17g}"]
                for lv, lk in zip(self.levels, lookups):
                    row.append(f"{lv.gamma[lk[int(p)]]:.17g}")
                wr.writerow(row)
        with open(d / "expansion.txt", "w") as fh:
            fh.write(f"kind = {self.kind}\ndepth = {self.depth}\n")
            if self.diagnostic:
                fh.write(f"diagnostic = {self.diagnostic}\n")
            for k in sorted(self.policy):
                if k != "level0_indices":
                    fh.write(f"{k} = {self.policy[k]}\n")


@dataclass
class LoadedExpansion:
    """Expansion dump read back from disk (limit, directions, Gamma table)."""

    v: SpectralField
    directions: list[SpectralField]
    positions: np.ndarray
    alphas: np.ndarray
    gamma: np.ndarray     # (n, K) per-level factors
    kind: str = ""

    @property
    def depth(self) -> int:
        return len(self.directions)

    def Gamma(self, k: int) -> np.ndarray:
        if k == 0:
            return np.ones(len(self.positions))
        return np.prod(self.gamma[:, :k], axis=1)


def read_expansion(directory, mode_set=None) -> LoadedExpansion:
    d = Path(directory)
    if not (d / "limit.sf").is_file() or not (d / "gamma.csv").is_file():
        raise FileNotFoundError(f"{d} is not an expansion directory (limit.sf, gamma.csv)")
    v = read_field(d / "limit.sf", mode_set)
    ws = []
    k = 1
    while (d / f"w_{k}.sf").is_file():
        ws.append(read_field(d / f"w_{k}.sf", v.mode_set))
        k += 1
    rows = list(csv.reader(open(d / "gamma.csv", newline="")))
    body = rows[1:]
    pos = np.array([int(r[0]) for r in body], dtype=int)
    alphas = np.array([float(r[1]) for r in body])
    gam = np.array([[float(x) for x in r[2:]] for r in body]).reshape(len(body), len(ws))
    kind = ""
    if (d / "expansion.txt").is_file():
        for line in (d / "expansion.txt").read_text().splitlines():
            if line.startswith("kind"):
                kind = line.split("=", 1)[1].strip()
    return LoadedExpansion(v, ws, pos, alphas, gam, kind)


# -- extraction ----------------------------------------------------------------

def _oscillates(d: np.ndarray, tail_fraction: float, ratio: float) -> bool:
    """True if the distances to the limit proxy show no decreasing trend."""
    n = len(d)
    cut = max(n - int(math.ceil(tail_fraction * n)), 3)
    d = d[:cut]
    third = max(len(d) // 3, 1)
    early, late = d[:third].max(), d[-third:].max()
    return bool(late > ratio * early)


def extract_expansion(seq: Sequence[SpectralField], depth_max: int,
                      limit_policy: str = "last",
                      limits: Sequence[SpectralField | None] | None = None,
                      alphas: Sequence[float] | None = None,
                      subset: Sequence[int] | None = None,
                      stride: int = 1,
                      trivial_threshold: float = TRIVIAL_THRESHOLD,
                      stagnation_tol: float = STAGNATION_TOL,
                      tail_fraction: float = TAIL_FRACTION,
                      oscillation_ratio: float = OSCILLATION_RATIO) -> UnitaryExpansion:
    """Extract a strict unitary expansion of depth at most ``depth_max``.

    ``limit_policy='last'`` uses the last retained element at each level as
    the limit and drops it.  ``limit_policy='given'`` takes ``limits`` =
    [v, w_1, w_2, ...] as known limits; a ``None`` entry (or a list shorter
    than the depth) falls back to the last-element proxy for that level.
    ``subset``/``stride`` select a subsequence up front.
    """
    if limit_policy not in ("last", "given"):
        raise ExpansionError(f"unknown limit policy {limit_policy!r}")
    if limit_policy == "given" and not limits:
        raise ExpansionError("limit_policy='given' needs limits")
    if depth_max < 0:
        raise ExpansionError("depth_max must be non-negative")
    seq = list(seq)
    if not seq:
        raise ExpansionError("empty sequence")
    if len(seq) < 3 * max(depth_max, 1):
        raise ExpansionError(f"need at least {3 * max(depth_max, 1)} elements for depth {depth_max}")
    _check_same(*seq)
    positions = np.arange(len(seq)) if subset is None else np.asarray(subset, dtype=int)
    positions = positions[::stride]
    policy = dict(limit_policy=limit_policy, trivial_threshold=trivial_threshold,
                  stagnation_tol=stagnation_tol, tail_fraction=tail_fraction,
                  oscillation_ratio=oscillation_ratio, depth_max=depth_max, stride=stride)
    al = None if alphas is None else np.asarray(alphas, dtype=float)

    def known(level: int):
        if limit_policy != "given" or limits is None or level >= len(limits):
            return None
        return limits[level]

    # level 0: the limit v
    cur_pos = positions
    cur = [seq[p] for p in cur_pos]
    v = known(0)
    if v is None:
        v = cur[-1]
        cur_pos, cur = cur_pos[:-1], cur[:-1]
    policy["level0_indices"] = cur_pos.copy()
    if len(cur) == 0 or all((x - v).znorm() < trivial_threshold for x in cur):
        return UnitaryExpansion(v, [], "trivial", cur_pos, al, "", policy)

    levels: list[ExpansionLevel] = []
    limit = v
    # absolute rounding carried by the current level's vectors
    noise = EPS * max([x.znorm() for x in cur] + [v.znorm()])
    prev_Gamma = np.ones(len(cur_pos))
    kind, diagnostic = "truncated", ""
    for k in range(1, depth_max + 1):
        diffs = [x - limit for x in cur]
        gamma = np.array([z.znorm() for z in diffs])
        padded = gamma == 0
        dirs = [z / g if g > 0 else SpectralField.zeros(z.mode_set) for z, g in zip(diffs, gamma)]
        Gamma = np.where(padded, 2.0 ** (-(cur_pos + 1.0) * k) * prev_Gamma, prev_Gamma * gamma)
        gamma = np.where(padded, 2.0 ** (-(cur_pos + 1.0) * k), gamma)

        wk = known(k)
        lv_pos, lv_dirs = cur_pos, dirs
        proxy_gamma = np.inf
        if wk is None:
            live = np.nonzero(~padded)[0]
            if len(live) == 0:
                break
            wk = dirs[live[-1]]
            proxy_gamma = gamma[live[-1]]
            keep = np.arange(live[-1])
            lv_pos = cur_pos[keep]
            lv_dirs = [dirs[i] for i in keep]
            gamma, Gamma, padded = gamma[keep], Gamma[keep], padded[keep]
        if len(lv_pos) < 3:
            diagnostic = f"level {k}: too few retained indices"
            break
        level = ExpansionLevel(k, lv_pos.copy(), gamma, Gamma, lv_dirs, wk, padded)

        dist = np.array([(x - wk).znorm() if not p else 0.0 for x, p in zip(lv_dirs, padded)])
        # stagnation: the tail sits below the tolerance, or no direction is
        # distinguishable from the proxy beyond its own rounding
        floor = ROUNDING_SAFETY * noise * (1.0 / np.where(padded, np.inf, gamma) + 1.0 / proxy_gamma)
        quart = max(len(dist) // 4, 1)
        if np.all(dist[-quart:] < stagnation_tol) or np.all(dist < floor):
            levels.append(level)
            kind = "finite"
            break
        if _oscillates(dist[~padded], tail_fraction, oscillation_ratio):
            diagnostic = f"level {k} rejected: {REJECT_MESSAGE}"
            break
        levels.append(level)
        cur_pos, cur, limit, prev_Gamma = lv_pos, lv_dirs, wk, Gamma
        noise = max(EPS, float(floor.max()) / ROUNDING_SAFETY)

    retained = levels[-1].indices if levels else policy["level0_indices"]
    return UnitaryExpansion(v, levels, kind, retained, al, diagnostic, policy)


# -- verification ----------------------------------------------------------------

@dataclass
class LevelReport:
    k: int
    max_reconstruction_error: float
    max_unit_defect: float
    max_uniqueness_error: float
    gamma_trend_ok: bool
    ratio_trend_ok: bool
    direction_trend_ok: bool


@dataclass
class ExpansionReport:
    levels: list[LevelReport]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _decreasing_trend(x: np.ndarray, tail_fraction: float = TAIL_FRACTION) -> bool:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return True
    x = x[: max(n - int(math.ceil(tail_fraction * n)), 3)]
    third = max(len(x) // 3, 1)
    return bool(np.median(x[-third:]) <= np.median(x[:third]))


def verify_expansion(exp: UnitaryExpansion, seq: Sequence[SpectralField],
                     rtol: float = 1e-10) -> ExpansionReport:
    """Re-derive Gamma and w_n^(k) from scratch and compare with ``exp``.

    Uniqueness: Gamma_{k,n} = ||v_n - v - sum_{j<k} Gamma_{j,n} w_j||_Z.
    """
    seq = list(seq)
    reports, failures = [], []
    for lv in exp.levels:
        k = lv.k
        rec, unit, uniq = 0.0, 0.0, 0.0
        prev = [exp.levels[j - 1] for j in range(1, k)]
        prev_lookup = [{int(i): r for r, i in enumerate(p.indices)} for p in prev]
        for r, pos in enumerate(lv.indices):
            vn = seq[int(pos)]
            partial = exp.v
            for p, lk in zip(prev, prev_lookup):
                partial = partial + p.Gamma[lk[int(pos)]] * p.w
            z = vn - partial
            scale = max(1.0, vn.znorm())
            if lv.padded[r]:
                rec = max(rec, z.znorm() / scale)
                continue
            rec = max(rec, (z - lv.Gamma[r] * lv.directions[r]).znorm() / scale)
            unit = max(unit, abs(lv.directions[r].znorm() - 1.0))
            uniq = max(uniq, abs(z.znorm() - lv.Gamma[r]) / scale)
        unit = max(unit, abs(lv.w.znorm() - 1.0))
        dist = [(x - lv.w).znorm() for x, p in zip(lv.directions, lv.padded) if not p]
        ratio_ok = True
        if k > 1:
            below = exp.levels[k - 2].at(lv.indices)
            ratio_ok = _decreasing_trend(lv.Gamma / below)
        rep = LevelReport(k, rec, unit, uniq, _decreasing_trend(lv.Gamma), ratio_ok,
                          _decreasing_trend(dist) if dist else True)
        reports.append(rep)
        if rec > rtol:
            failures.append(f"level {k}: reconstruction error {rec:.3e}")
        if unit > 1e-12:
            failures.append(f"level {k}: unit-norm defect {unit:.3e}")
        if uniq > rtol:
            failures.append(f"level {k}: uniqueness check failed ({uniq:.3e})")
    return ExpansionReport(reports, failures)


# -- pre-unitary conversion and synthesis --------------------------------------------

def convert_pre_unitary(v: SpectralField,
                        terms: Sequence[tuple[np.ndarray, SpectralField]],
                        indices: Sequence[int] | None = None,
                        alphas: Sequence[float] | None = None) -> UnitaryExpansion:
    """Turn v + sum Gamma_k w_k with nonzero w_k into unit directions.

    w_k -> w_k / ||w_k||_Z and Gamma_k -> ||w_k||_Z Gamma_k; reconstructed
    values are unchanged.  The remainders w_n^(k) are rebuilt from the finite
    sum as (sum_{j>=k} Gamma_j w_j) / Gamma_k, so the reconstruction identity
    holds exactly; they are unit vectors only in the limit.
    """
    if not terms:
        idx = np.arange(0) if indices is None else np.asarray(indices)
        return UnitaryExpansion(v, [], "trivial", idx, None if alphas is None else np.asarray(alphas))
    n = len(terms[0][0])
    idx = np.arange(n) if indices is None else np.asarray(indices, dtype=int)
    hats = []
    for G, w in terms:
        nrm = w.znorm()
        if nrm == 0:
            raise ExpansionError("zero direction in pre-unitary expansion")
        if len(G) != n:
            raise ExpansionError("coefficient arrays differ in length")
        hats.append((nrm * np.asarray(G, dtype=float), w / nrm))
    levels = []
    K = len(hats)
    for k in range(1, K + 1):
        Gk, wk = hats[k - 1]
        dirs = []
        for r in range(n):
            tail = SpectralField.zeros(v.mode_set)
            for j in range(k, K + 1):
                tail = tail + hats[j - 1][0][r] * hats[j - 1][1]
            dirs.append(tail / Gk[r])
        gam = Gk / (hats[k - 2][0] if k > 1 else 1.0)
        levels.append(ExpansionLevel(k, idx.copy(), gam, Gk, dirs, wk, np.zeros(n, bool)))
    return UnitaryExpansion(v, levels, "finite", idx.copy(),
                            None if alphas is None else np.asarray(alphas),
                            policy={"source": "pre-unitary"})


@dataclass
class SequenceSpec:
    """Recipe for v_n = v + sum_k Gamma_k(n) w_k over an index range."""

    v: SpectralField
    terms: list[tuple[Callable[[np.ndarray], np.ndarray], SpectralField]]
    n: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n)


def synthesize_sequence(spec: SequenceSpec, check_decay: bool = True) -> list[SpectralField]:
    """Evaluate the finite sum; rejects coefficient families whose ratios grow."""
    n = spec.n
    values = [np.asarray(G(n), dtype=complex if np.iscomplexobj(G(n)) else float) for G, _ in spec.terms]
    if check_decay:
        for a, b in zip(values, values[1:]):
            r = np.abs(b) / np.maximum(np.abs(a), 1e-300)
            if len(r) >= 2 and not (r[-1] < r[0] or np.allclose(r, 0)):
                raise ExpansionError("coefficient ratios Gamma_{k+1}/Gamma_k do not decay")
    out = []
    for i in range(len(n)):
        f = spec.v
        for vals, (_, w) in zip(values, spec.terms):
            f = f + vals[i] * w
        out.append(f)
    return out
