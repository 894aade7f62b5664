"""Forward constructions of force/solution pairs with prescribed expansions.

All norm budgets here (M, D0, c0, |g|) are H-norms, i.e. L^2 norms on the
torus; see :mod:`nsasym.field` for the relation to the coefficient norm.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from nsasym.bilinear import b_real_matrix, bilinear_B, bilinear_Bs, bs_real_matrix, stokes_real_diagonal
from nsasym.field import (SpectralField, curl_basis_field, read_field, stokes_apply, stokes_solve,
                          write_field)
from nsasym.modes import ModeSet, custom_modes
from nsasym.solver import SolverError, newton_solve

GAMMA = 0.5            # convergence radius margin: D0 * theta_n <= GAMMA
H_MARGIN = 1e-8        # |h_k| must exceed this for k >= 1
BALANCE_TOL = 1e-10
MAX_DRAWS = 100
BW0_TOL = 1e-12


class ForceError(ValueError):
    """A construction precondition failed."""


def _hscale(ms: ModeSet) -> float:
    return math.sqrt(2.0 * (2 * math.pi) ** ms.dimension)


# -- operator norms ----------------------------------------------------------

def divergence_free_basis(ms: ModeSet) -> np.ndarray:
    """Z-orthonormal real basis of the divergence-free fields, as columns.

    Columns live in the ``to_real`` coordinates; each mode contributes
    d-1 unit vectors perpendicular to k, in real and imaginary parts.
    """
    M, d = len(ms), ms.dimension
    n = M * d
    cols = []
    for i, k in enumerate(ms.modes.astype(float)):
        perp = sla.null_space(k[None, :]).T  # (d-1, d), orthonormal
        for e in perp:
            for part in (0, 1):
                x = np.zeros(2 * n)
                x[part * n + i * d: part * n + (i + 1) * d] = e
                cols.append(x)
    return np.array(cols).T


@dataclass(frozen=True)
class OperatorNorms:
    M_A: float
    M_B_lower: float
    M_B_upper: float

    @property
    def c0(self) -> float:
        """Smallness radius 1/(4(M_B+1)), from the certified M_B bound."""
        return 1.0 / (4.0 * (self.M_B_upper + 1.0))


_NORM_CACHE: dict[tuple, OperatorNorms] = {}


def _mb_upper(ms: ModeSet) -> float:
    # |conv_t| <= |k_t| * 2 ||u||_Z ||v||_Z by Cauchy-Schwarz over the triads
    t, _, _ = ms.triads()
    targets = np.unique(t)
    z = 2.0 * math.sqrt(float(ms.k_squared[targets].sum())) if len(targets) else 0.0
    return z / _hscale(ms)


def _mb_lower(ms: ModeSet, rng: np.random.Generator, restarts: int, sweeps: int) -> float:
    E = divergence_free_basis(ms)
    best = 0.0
    for _ in range(restarts):
        u = SpectralField.from_real(ms, E @ rng.standard_normal(E.shape[1]))
        u = u / u.znorm()
        sigma = 0.0
        for _ in range(sweeps):
            U, s, Vt = np.linalg.svd(b_real_matrix(u, 1) @ E, full_matrices=False)
            v = SpectralField.from_real(ms, E @ Vt[0])
            U, s, Vt = np.linalg.svd(b_real_matrix(v, 2) @ E, full_matrices=False)
            u = SpectralField.from_real(ms, E @ Vt[0])
            if s[0] <= sigma * (1 + 1e-10):
                sigma = max(sigma, s[0])
                break
            sigma = s[0]
        best = max(best, sigma)
    return best / _hscale(ms)


def operator_norms(ms: ModeSet, seed: int = 0, restarts: int = 4, sweeps: int = 20) -> OperatorNorms:
    """M_A exactly; M_B bracketed by a maximization and a coefficient-sum bound."""
    key = (ms.dimension, ms.modes.tobytes(), seed, restarts, sweeps)
    if key not in _NORM_CACHE:
        upper = _mb_upper(ms)
        lower = 0.0 if upper == 0.0 else _mb_lower(ms, np.random.default_rng(seed), restarts, sweeps)
        _NORM_CACHE[key] = OperatorNorms(float(ms.k_squared.max()), float(lower), float(max(lower, upper)))
    return _NORM_CACHE[key]


# -- L_u = A + Bs(u, .) --------------------------------------------------------

def l_u_apply(u: SpectralField, w: SpectralField) -> SpectralField:
    return stokes_apply(w) + bilinear_Bs(u, w)


def l_u_solve(u: SpectralField, f: SpectralField, c0: float | None = None) -> SpectralField:
    """Solve Aw + Bs(u, w) = f for |u| <= c0."""
    ms = u.mode_set
    if c0 is None:
        c0 = operator_norms(ms).c0
    if u.hnorm() > c0:
        raise ForceError(f"precondition |u| <= c0 violated: |u| = {u.hnorm():.6g} > c0 = {c0:.6g}")
    J = bs_real_matrix(u)
    J[np.diag_indices_from(J)] += stokes_real_diagonal(ms)
    try:
        x = sla.solve(J, f.to_real())
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:  # pragma: no cover
        raise SolverError(f"L_u singular despite |u| <= c0: {exc}") from None
    w = SpectralField.from_real(ms, x)
    defect = (l_u_apply(u, w) - f).znorm()
    if defect > 1e-12 * max(f.znorm(), 1e-300) and f.znorm() > 0:
        raise SolverError(f"L_u solve defect {defect:.3g} exceeds tolerance")
    if w.hnorm() > 2.0 * f.hnorm() * (1 + 1e-12):
        raise SolverError("bound |L_u^{-1} f| <= 2|f| violated")
    return w


# -- force expansion plans ---------------------------------------------------

@dataclass
class ForceExpansionPlan:
    w: list[SpectralField]
    h: list[SpectralField]
    M: float
    D0: float
    norms: OperatorNorms
    case_tag: str
    seed: int
    draws: list[int] = dc_field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.w) - 1

    @property
    def c0(self) -> float:
        return self.norms.c0

    @property
    def M_A(self) -> float:
        return self.norms.M_A

    @property
    def M_B(self) -> float:
        return self.norms.M_B_upper

    @property
    def mode_set(self) -> ModeSet:
        return self.w[0].mode_set

    def _w(self, k: int) -> SpectralField | None:
        return self.w[k] if 0 <= k <= self.K else None

    def balance_residuals(self) -> np.ndarray:
        """Scale-relative defects of Aw_m + sum_{k=0}^{m+1} B(w_k, w_{m+1-k}) = h_m."""
        out = []
        for m in range(self.K):
            lhs = stokes_apply(self.w[m])
            scale = lhs.znorm() + self.h[m].znorm()
            for k in range(m + 2):
                a, b = self._w(k), self._w(m + 1 - k)
                if a is None or b is None:
                    continue
                t = bilinear_B(a, b)
                lhs = lhs + t
                scale += t.znorm()
            out.append((lhs - self.h[m]).znorm() / max(scale, 1e-300))
        return np.array(out)

    def check_invariants(self) -> list[str]:
        bad = []
        w0 = self.w[0]
        if bilinear_B(w0, w0).znorm() > BW0_TOL * max(1.0, w0.znorm() ** 2 * math.sqrt(self.M_A)):
            bad.append("B(w0, w0) != 0")
        for k in range(1, self.K + 1):
            if self.w[k].hnorm() > self.M * self.D0**k * (1 + 1e-12):
                bad.append(f"|w_{k}| exceeds M D0^{k}")
            if self.h[k].hnorm() <= H_MARGIN:
                bad.append(f"h_{k} vanishes")
        res = self.balance_residuals()
        for m, r in enumerate(res):
            if r > BALANCE_TOL:
                bad.append(f"order-{m} balance residual {r:.3g}")
        return bad

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, (w, h) in enumerate(zip(self.w, self.h)):
            write_field(d / f"w_{k}.sf", w)
            write_field(d / f"h_{k}.sf", h)
        res = self.balance_residuals()
        lines = [f"K={self.K}", f"M={self.M!r}", f"D0={self.D0!r}", f"c0={self.c0!r}",
                 f"M_A={self.M_A!r}", f"M_B={self.M_B!r}", f"M_B_lower={self.norms.M_B_lower!r}",
                 f"case={self.case_tag}", f"seed={self.seed}",
                 f"draws={','.join(map(str, self.draws))}"]
        (d / "plan.txt").write_text("\n".join(lines) + "\n")
        with open(d / "balance.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["m", "residual"])
            for m, r in enumerate(res):
                wr.writerow([m, f"{r:.17g}"])


def read_plan(directory) -> ForceExpansionPlan:
    d = Path(directory)
    meta = dict(line.split("=", 1) for line in (d / "plan.txt").read_text().splitlines() if "=" in line)
    K = int(meta["K"])
    w0 = read_field(d / "w_0.sf")
    ms = w0.mode_set
    w = [w0] + [read_field(d / f"w_{k}.sf", ms) for k in range(1, K + 1)]
    h = [read_field(d / f"h_{k}.sf", ms) for k in range(K + 1)]
    norms = OperatorNorms(float(meta["M_A"]), float(meta["M_B_lower"]), float(meta["M_B"]))
    draws = [int(x) for x in meta.get("draws", "").split(",") if x]
    return ForceExpansionPlan(w, h, float(meta["M"]), float(meta["D0"]), norms, meta["case"],
                              int(meta["seed"]), draws)


def _random_direction(ms: ModeSet, rng: np.random.Generator) -> SpectralField:
    f = SpectralField.random(ms, rng)
    return f / f.hnorm()


def bs_vanishes(w0: SpectralField, tol: float = 1e-12) -> bool:
    """True when Bs(w0, .) is the zero map on the divergence-free fields."""
    ms = w0.mode_set
    if w0.znorm() == 0:
        return True
    S = bs_real_matrix(w0) @ divergence_free_basis(ms)
    return float(np.abs(S).max()) <= tol * w0.znorm() * math.sqrt(ms.k_squared.max())


def build_force_expansion(w0: SpectralField, M: float, D0: float, K: int, seed: int = 0,
                          max_draws: int = MAX_DRAWS) -> ForceExpansionPlan:
    """Recursive choice of (w_k, h_k), k = 0..K, with w_{K+1} taken as zero."""
    ms = w0.mode_set
    if M < 1 or D0 <= 1:
        raise ForceError("need M >= 1 and D0 > 1")
    if K < 1:
        raise ForceError("need K >= 1")
    if bilinear_B(w0, w0).znorm() > BW0_TOL * max(1.0, w0.znorm() ** 2 * math.sqrt(ms.k_squared.max())):
        raise ForceError("w0 must satisfy B(w0, w0) = 0")
    norms = operator_norms(ms)
    rng = np.random.default_rng(seed)
    if bs_vanishes(w0):
        w, h, draws = _case2(w0, M, D0, K, norms, rng)
        tag = "Case2"
    else:
        w, h, draws = _case1(w0, M, D0, K, rng, max_draws)
        tag = "Case1"
    plan = ForceExpansionPlan(w, h, M, D0, norms, tag, seed, draws)
    bad = plan.check_invariants()
    if bad:
        raise SolverError("plan invariants failed: " + "; ".join(bad))
    return plan


def _accum(w: list[SpectralField], m: int) -> SpectralField:
    """A w_m + sum_{k=1}^m B(w_k, w_{m+1-k})."""
    s = stokes_apply(w[m])
    for k in range(1, m + 1):
        s = s + bilinear_B(w[k], w[m + 1 - k])
    return s


def _case1(w0, M, D0, K, rng, max_draws):
    ms = w0.mode_set
    w = [w0, _random_direction(ms, rng) * (M * D0 * rng.uniform(0.5, 1.0))]
    h: list[SpectralField] = [None] * (K + 1)
    draws = []
    for m in range(1, K):
        S = _accum(w, m)
        s_norm = S.hnorm()
        budget = M * D0 ** (m + 1)
        for n in range(1, max_draws + 1):
            e = _random_direction(ms, rng)
            b = bilinear_Bs(w0, e).hnorm()
            t = budget * rng.uniform(0.5, 1.0)
            if s_norm > H_MARGIN and b * t >= s_norm:
                t = 0.5 * s_norm / b * rng.uniform(0.5, 1.0)
            cand = e * t
            hm = S + bilinear_Bs(w0, cand)
            strict = s_norm <= H_MARGIN or bilinear_Bs(w0, cand).hnorm() < s_norm
            if strict and hm.hnorm() > H_MARGIN:
                break
        else:
            raise SolverError(f"no admissible w_{m + 1} after {max_draws} draws")
        draws.append(n)
        w.append(cand)
        h[m] = hm
    h[0] = stokes_apply(w0) + bilinear_Bs(w0, w[1])
    h[K] = _accum(w, K)
    return w, h, draws


def _case2(w0, M, D0, K, norms, rng):
    ms = w0.mode_set
    c0 = norms.c0
    h1 = _random_direction(ms, rng) * (c0 * rng.uniform(0.5, 1.0))
    try:
        st = newton_solve(1.0, h1, stokes_solve(h1), tol=1e-14 * h1.znorm(), max_iter=50)
    except SolverError as exc:  # pragma: no cover
        raise SolverError(f"small-data Newton solve failed: {exc}") from None
    w1 = st.v
    if w1.hnorm() > h1.hnorm() * (1 + 1e-12):
        raise SolverError("small-data bound |w1| <= |h1| violated")
    w = [w0, w1]
    h: list[SpectralField] = [None] * (K + 1)
    h[1] = h1
    for m in range(2, K + 1):
        f = _random_direction(ms, rng) * (0.5 * M * D0**m * rng.uniform(0.5, 1.0))
        w.append(l_u_solve(w1, f, c0))
        hm = f
        for k in range(2, m):
            hm = hm + bilinear_B(w[k], w[m + 1 - k])
        h[m] = hm
    h[0] = stokes_apply(w0)
    return w, h, []


# -- evaluation ----------------------------------------------------------------

@dataclass
class PlanEvaluation:
    n: np.ndarray
    alphas: np.ndarray
    v: list[SpectralField]
    g: list[SpectralField]
    residual: np.ndarray
    tail: np.ndarray
    tail_bound: np.ndarray
    m_trunc: int
    excluded: list[int]
    N0: int | None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n", "alpha", "residual", "tail_bound"])
            for row in zip(self.n, self.alphas, self.residual, self.tail_bound):
                wr.writerow([int(row[0])] + [f"{x:.17g}" for x in row[1:]])


def tail_norm(plan: ForceExpansionPlan, theta: float, m: int) -> float:
    """|sum_{k=m+1}^K theta^{k-m} w_k|, the measured remainder of w_n^{(m)} - w_m."""
    acc = SpectralField.zeros(plan.mode_set)
    for k in range(m + 1, plan.K + 1):
        acc = acc + plan.w[k] * theta ** (k - m)
    return acc.hnorm()


def tail_bound(plan: ForceExpansionPlan, theta: float, m: int) -> float:
    x = plan.D0 * theta
    return plan.M * plan.D0 ** (m + 1) * theta / (1.0 - x)


def truncated_pair(plan: ForceExpansionPlan, alpha: float, m_trunc: int):
    theta = 1.0 / alpha
    v = SpectralField.zeros(plan.mode_set)
    g = SpectralField.zeros(plan.mode_set)
    for k in range(min(m_trunc, plan.K) + 1):
        v = v + plan.w[k] * theta**k
        g = g + plan.h[k] * theta**k
    return v, g


def steady_residual(v: SpectralField, g: SpectralField, alpha: float) -> float:
    """|Av + alpha B(v, v) - g| in the H-norm."""
    return (stokes_apply(v) + bilinear_B(v, v) * alpha - g).hnorm()


def evaluate_plan(plan: ForceExpansionPlan, alphas: Sequence[float], m_trunc: int,
                  n_labels: Sequence[int] | None = None) -> PlanEvaluation:
    """Truncated (v_n, g_n) with residuals and tail bounds for admissible alphas."""
    alphas = np.asarray(alphas, dtype=float)
    labels = np.arange(1, len(alphas) + 1) if n_labels is None else np.asarray(n_labels)
    if not 0 <= m_trunc <= plan.K:
        raise ForceError(f"m_trunc must lie in [0, {plan.K}]")
    ok = plan.D0 / alphas <= GAMMA
    excluded = [int(n) for n, keep in zip(labels, ok) if not keep]
    N0 = next((int(labels[i]) for i in range(len(ok)) if ok[i:].all()), None)
    vs, gs, res, tails, bounds = [], [], [], [], []
    for a in alphas[ok]:
        v, g = truncated_pair(plan, a, m_trunc)
        vs.append(v)
        gs.append(g)
        res.append(steady_residual(v, g, a))
        tails.append(tail_norm(plan, 1.0 / a, m_trunc))
        bounds.append(tail_bound(plan, 1.0 / a, m_trunc))
    return PlanEvaluation(labels[ok], alphas[ok], vs, gs, np.array(res), np.array(tails),
                          np.array(bounds), m_trunc, excluded, N0)


# -- vanishing-limit pairs -------------------------------------------------------

@dataclass
class VanishingPair:
    w1: SpectralField
    g: SpectralField
    h1: SpectralField
    alphas: np.ndarray

    def v(self, alpha: float) -> SpectralField:
        return self.w1 * alpha**-0.5

    def g_n(self, alpha: float) -> SpectralField:
        return self.g + self.h1 * alpha**-0.5

    @property
    def sequence(self) -> list[SpectralField]:
        return [self.v(a) for a in self.alphas]

    @property
    def forces(self) -> list[SpectralField]:
        return [self.g_n(a) for a in self.alphas]

    def residuals(self) -> np.ndarray:
        return np.array([steady_residual(self.v(a), self.g_n(a), a) for a in self.alphas])


def vanishing_limit_pair(u: SpectralField, M: float, alphas: Sequence[float]) -> VanishingPair:
    """Solutions v_n -> 0 for forces g_n -> g with |g| = M."""
    if M <= 0:
        raise ForceError("M must be positive")
    buu = bilinear_B(u, u)
    if buu.znorm() <= 1e-14 * max(u.znorm() ** 2, 1e-300) * math.sqrt(u.mode_set.k_squared.max()):
        raise ForceError("B(u, u) = 0: the nonvanishing condition on u fails")
    w1 = u * math.sqrt(M / buu.hnorm())
    return VanishingPair(w1, bilinear_B(w1, w1), stokes_apply(w1), np.asarray(alphas, dtype=float))


def nonzero_b_example(ms: ModeSet) -> SpectralField:
    """Two-mode field u with B(u, u) = Bs(u1, u2) != 0.

    2D: u1 on 2e1 and u2 on e2, curl-basis elements.  3D: u1 = e2 on e1,
    u2 = e3 on e2.
    """
    if ms.dimension == 2:
        return curl_basis_field(ms, (2, 0)) + curl_basis_field(ms, (0, 1))
    return SpectralField.from_modes(ms, {(1, 0, 0): (0, 1, 0), (0, 1, 0): (0, 0, 1)})


# -- Bs witness --------------------------------------------------------------------

@dataclass(frozen=True)
class BsWitness:
    w: SpectralField
    k: tuple[int, ...]
    k_prime: tuple[int, ...]
    coefficient: np.ndarray
    margin: float


def witness_k_prime_2d(k: Sequence[int]) -> tuple[int, int]:
    k1, k2 = int(k[0]), int(k[1])
    if k1 >= 2:
        return (0, 1)
    if k1 == 1:
        return (0, 1) if abs(k2) >= 1 else (0, 2)
    if k1 == 0 and abs(k2) >= 2:
        return (1, 0)
    if k1 == 0 and abs(k2) == 1:
        return (2, 0)
    raise ForceError(f"{tuple(k)} is not a canonical wave vector")


def witness_k_prime_3d(k: Sequence[int], a: np.ndarray, rtol: float = 1e-8) -> tuple[int, int, int]:
    k = np.asarray(k)
    axes = [i for i in range(3) if k[i] != 0]
    allowed = [i for i in range(3) if i not in axes] if len(axes) == 1 else [0, 1, 2]
    dots = np.abs(np.asarray(a))
    scale = float(np.linalg.norm(a))
    pick = next((i for i in allowed if dots[i] > rtol * scale), None)
    if pick is None:
        pick = max(allowed, key=lambda i: dots[i])
    e = [0, 0, 0]
    e[pick] = 1
    return tuple(e)


def find_bs_witness(v: SpectralField, ms: ModeSet | None = None) -> BsWitness:
    """Single-pair w with Bs(v, w) != 0, built from the top mode of v."""
    ms = v.mode_set if ms is None else ms
    if ms != v.mode_set:
        raise ForceError("v must live on the given space")
    if ms.lambda_cut < 5:
        raise ForceError("witness construction needs lambda >= 5")
    mags = np.linalg.norm(v.coeffs, axis=1)
    if mags.max() == 0:
        raise ForceError("v = 0 has no witness")
    support = mags > 1e-14 * mags.max()
    r = math.sqrt(ms.lambda_cut) - 1
    if np.any(np.sqrt(ms.k_squared[support]) > r + 1e-12):
        raise ForceError("v must be supported in |k| <= sqrt(lambda) - 1")
    idx = np.flatnonzero(support)
    # canonical modes are stored in lexicographic order, so the last is the max
    top = int(idx[-1])
    k = tuple(int(x) for x in ms.modes[top])
    a = v.coeffs[top]
    if ms.dimension == 2:
        kp = witness_k_prime_2d(k)
        w = curl_basis_field(ms, kp)
    else:
        kp = witness_k_prime_3d(k, a)
        w = SpectralField.from_modes(ms, {kp: np.cross(k, kp).astype(complex)})
    bs = bilinear_Bs(v, w)
    target = tuple(x + y for x, y in zip(k, kp))
    coef = bs.coefficient(target)
    margin = bs.znorm()
    if margin <= 0 or np.linalg.norm(coef) == 0:
        raise SolverError(f"witness failed at k={k}, k'={kp}")  # pragma: no cover
    return BsWitness(w, k, kp, coef, margin)


# -- zero-Bs subspace ----------------------------------------------------------------

@dataclass
class ZeroBsReport:
    mode_set: ModeSet
    k: tuple[int, ...]
    K2: list[tuple[int, ...]]
    K3: list[tuple[int, ...]]
    max_defect: float
    n_checks: int
    notes: list[str]

    @property
    def ok(self) -> bool:
        return self.max_defect <= 1e-12


def zero_bs_subspace(k: Sequence[int], M_bound: float, K3: Sequence[Sequence[int]] = ()) -> ZeroBsReport:
    """Space E[K1 u K2 u K3] on which Bs(v, .) = 0 for every v in E[K1]."""
    k = tuple(int(x) for x in k)
    d = len(k)
    kn = math.sqrt(sum(x * x for x in k))
    if kn <= 2 * M_bound:
        raise ForceError(f"|k| = {kn:.6g} must exceed 2M = {2 * M_bound:.6g}")
    r = int(math.floor(M_bound))
    K2 = [j for j in itertools.product(range(-r, r + 1), repeat=d)
          if any(j) and sum(x * x for x in j) <= M_bound**2]
    K3 = [tuple(int(x) for x in j) for j in K3]
    notes = []
    kept3 = []
    k3set = set(K3)
    for j in K3:
        if not any(j):
            raise ForceError("K3 contains the zero vector")
        if sum(a * b for a, b in zip(j, k)) != 0:
            raise ForceError(f"K3 element {j} is not orthogonal to k")
        if tuple(-x for x in j) not in k3set:
            raise ForceError(f"K3 is not symmetric: {j} lacks its opposite")
        if sum(x * x for x in j) <= M_bound**2:
            notes.append(f"K3 element {j} already lies in K2; dropped from K3")
            continue
        kept3.append(j)
    ms = custom_modes(d, [k, *K2, *kept3])
    E = divergence_free_basis(ms)
    i, _ = ms.index(k)
    defect = 0.0
    checks = 0
    for col in E.T:
        x = SpectralField.from_real(ms, col)
        if not np.any(x.coeffs[i]):
            continue
        S = bs_real_matrix(x) @ E
        defect = max(defect, float(np.abs(S).max()))
        checks += S.shape[1]
    return ZeroBsReport(ms, k, K2, kept3, defect, checks, notes)
