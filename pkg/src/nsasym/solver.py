"""Newton solver and natural continuation for Av + alpha B(v, v) = g."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from nsasym.bilinear import bilinear_B, bs_real_matrix, stokes_real_diagonal
from nsasym.field import (SpectralField, _check_same, read_field, stokes_apply,
                          stokes_solve, write_field)
from nsasym.modes import ModeSet

DEFAULT_TOL = 1e-9
ENERGY_SLACK = 1e-8


class SolverError(RuntimeError):
    pass


class SingularJacobian(SolverError):
    def __init__(self, alpha: float):
        super().__init__(f"fold/bifurcation suspected: singular Jacobian at alpha={alpha:.6g}")
        self.alpha = alpha


class NoConvergence(SolverError):
    """Raised when Newton exhausts its iterations; ``state`` is the last iterate."""

    def __init__(self, state: "SteadyState"):
        super().__init__(f"no convergence at alpha={state.alpha:.6g} "
                         f"(residual {state.residual_norm:.3e} after {state.newton_iters} iterations)")
        self.state = state


@dataclass(frozen=True)
class SteadyState:
    alpha: float
    v: SpectralField
    residual_norm: float
    newton_iters: int
    converged: bool = True


def residual(v: SpectralField, alpha: float, g: SpectralField) -> SpectralField:
    """Av + alpha B(v, v) - g."""
    _check_same(v, g)
    return stokes_apply(v) + alpha * bilinear_B(v, v) - g


def jacobian(v: SpectralField, alpha: float) -> np.ndarray:
    """Real Jacobian of the residual at v: w -> Aw + alpha Bs(v, w)."""
    J = alpha * bs_real_matrix(v) if alpha != 0 else np.zeros((v.mode_set.n_real,) * 2)
    J[np.diag_indices_from(J)] += stokes_real_diagonal(v.mode_set)
    return J


def _lu(J: np.ndarray, alpha: float):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu, piv = sla.lu_factor(J, check_finite=True)
        except (sla.LinAlgWarning, ValueError, np.linalg.LinAlgError):
            raise SingularJacobian(alpha) from None
    d = np.abs(np.diag(lu))
    if not d.min() > np.finfo(float).eps * d.max():
        raise SingularJacobian(alpha)
    return lu, piv


def newton_solve(alpha: float, g: SpectralField, v_init: SpectralField,
                 tol: float = DEFAULT_TOL, max_iter: int = 25) -> SteadyState:
    """Newton iteration with dense LU; residual measured in the Z-norm."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    ms = _check_same(g, v_init)
    v = v_init
    r = residual(v, alpha, g)
    rn = r.znorm()
    for it in range(max_iter + 1):
        if rn <= tol:
            return SteadyState(alpha, v, rn, it)
        if it == max_iter or not math.isfinite(rn):
            break
        lu, piv = _lu(jacobian(v, alpha), alpha)
        dx = sla.lu_solve((lu, piv), r.to_real())
        v = v - SpectralField.from_real(ms, dx)
        r = residual(v, alpha, g)
        rn = r.znorm()
    raise NoConvergence(SteadyState(alpha, v, rn, max_iter, converged=False))


def picard(alpha: float, g: SpectralField, v_init: SpectralField | None = None,
           tol: float = 1e-13, max_iter: int = 500) -> SpectralField:
    """Fixed-point iteration v <- A^{-1}(g - alpha B(v, v)), run to stagnation.

    Only contractive for small alpha; used as an independent check on Newton
    and for seeding.
    """
    v = stokes_solve(g) if v_init is None else v_init
    for _ in range(max_iter):
        nxt = stokes_solve(g - alpha * bilinear_B(v, v))
        step = (nxt - v).znorm()
        v = nxt
        if step <= tol * max(1.0, v.znorm()):
            return v
        if not math.isfinite(step):
            break
    raise SolverError(f"Picard iteration did not settle at alpha={alpha:.6g}")


# -- continuation ------------------------------------------------------------

@dataclass(frozen=True)
class StepPolicy:
    """Step control for continuation in log(alpha).

    ``spacing='adaptive'`` grows the step by ``grow`` after a solve taking at
    most ``easy_iters`` Newton iterations and multiplies it by ``cut`` after a
    failure.  ``spacing='geometric'`` emits ``n_points`` geometrically spaced
    values; failures there are bridged by unrecorded intermediate solves.
    """

    spacing: str = "adaptive"
    initial_step: float = 0.01
    max_step: float = 0.025
    min_step: float = 1e-8
    grow: float = 1.3
    cut: float = 0.5
    easy_iters: int = 3
    n_points: int = 400
    tol: float = DEFAULT_TOL
    max_iter: int = 25
    secant: bool = True

    def __post_init__(self):
        if self.spacing not in ("adaptive", "geometric"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if self.tol <= 0 or self.min_step <= 0 or self.initial_step <= 0:
            raise ValueError("tolerances and steps must be positive")


@dataclass
class ContinuationRun:
    g: SpectralField
    states: list[SteadyState]
    meta: dict = field(default_factory=dict)
    truncated: bool = False
    diagnostic: str = ""

    @property
    def mode_set(self) -> ModeSet:
        return self.g.mode_set

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.states])

    @property
    def fields(self) -> list[SpectralField]:
        return [s.v for s in self.states]

    @property
    def grashof(self) -> np.ndarray:
        """True Grashof numbers alpha |g|."""
        return self.alphas * self.g.hnorm()

    def check_invariants(self, tol: float | None = None) -> list[str]:
        """List of violated state invariants (empty when all hold)."""
        tol = float(self.meta.get("tol", DEFAULT_TOL)) if tol is None else tol
        problems = []
        gh = self.g.hnorm()
        a = self.alphas
        if np.any(np.diff(a) <= 0):
            problems.append("alphas not strictly increasing")
        for i, s in enumerate(self.states):
            if s.residual_norm > tol:
                problems.append(f"state {i}: residual {s.residual_norm:.3e} > {tol:.1e}")
            if s.v.hnorm() > gh * (1 + ENERGY_SLACK):
                problems.append(f"state {i}: |v| exceeds |g|")
        return problems

    # -- IO --
    def write(self, directory, snapshots: bool = True) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "branch.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "znorm", "hnorm", "residual", "newton_iters"])
            for s in self.states:
                w.writerow([f"{s.alpha:.17g}", f"{s.v.znorm():.17g}", f"{s.v.hnorm():.17g}",
                            f"{s.residual_norm:.17g}", s.newton_iters])
        write_field(d / "g.sf", self.g)
        if snapshots:
            for i, s in enumerate(self.states):
                write_field(d / f"state_{i}.sf", s.v)
        with open(d / "run.txt", "w") as fh:
            for k in sorted(self.meta):
                fh.write(f"{k} = {self.meta[k]}\n")
            fh.write(f"truncated = {self.truncated}\n")
            if self.diagnostic:
                fh.write(f"diagnostic = {self.diagnostic}\n")

    @classmethod
    def read(cls, directory) -> "ContinuationRun":
        d = Path(directory)
        if not (d / "branch.csv").is_file() or not (d / "g.sf").is_file():
            raise FileNotFoundError(f"{d} is not a branch directory (branch.csv, g.sf)")
        g = read_field(d / "g.sf")
        ms = g.mode_set
        states = []
        with open(d / "branch.csv", newline="") as fh:
            for i, row in enumerate(csv.DictReader(fh)):
                path = d / f"state_{i}.sf"
                if not path.is_file():
                    raise FileNotFoundError(f"missing snapshot {path}")
                states.append(SteadyState(float(row["alpha"]), read_field(path, ms),
                                          float(row["residual"]), int(row["newton_iters"])))
        meta = {}
        if (d / "run.txt").is_file():
            for line in (d / "run.txt").read_text().splitlines():
                if "=" in line:
                    k, v = line.split("=", 1)
                    meta[k.strip()] = v.strip()
        truncated = meta.pop("truncated", "False") == "True"
        diagnostic = meta.pop("diagnostic", "")
        return cls(g, states, meta, truncated, diagnostic)


def initial_state(alpha: float, g: SpectralField, v_init: SpectralField | None = None,
                  tol: float = DEFAULT_TOL, max_iter: int = 25) -> SteadyState:
    """Steady state at ``alpha``.

    Tries Newton from ``v_init`` (or a Picard seed from A^{-1}g); failing
    that, continues from alpha = 0 where the solution is A^{-1}g.
    """
    if v_init is None:
        try:
            v_init = picard(alpha, g, max_iter=200)
        except SolverError:
            v_init = stokes_solve(g)
    try:
        return newton_solve(alpha, g, v_init, tol, max_iter)
    except SolverError:
        pass
    state = newton_solve(0.0, g, stokes_solve(g), tol, max_iter)
    a, step = 0.0, min(alpha, 0.1)
    while a < alpha:
        nxt = min(alpha, a + step)
        try:
            state = newton_solve(nxt, g, state.v, tol, max_iter)
            a = nxt
            step *= 1.3
        except SolverError:
            step *= 0.5
            if step < 1e-10 * max(alpha, 1.0):
                raise
    return state


def continue_branch(g: SpectralField, alpha_start: float, alpha_end: float,
                    policy: StepPolicy | None = None,
                    v_start: SpectralField | None = None) -> ContinuationRun:
    """Follow the steady branch from ``alpha_start`` to ``alpha_end``."""
    policy = policy or StepPolicy()
    if not (0 < alpha_start < alpha_end):
        raise ValueError("need 0 < alpha_start < alpha_end")
    meta = {f"policy.{k}": v for k, v in asdict(policy).items()}
    meta.update(tol=policy.tol, alpha_start=alpha_start, alpha_end=alpha_end,
                g_hnorm=g.hnorm(), grashof_start=alpha_start * g.hnorm(),
                grashof_end=alpha_end * g.hnorm())
    first = initial_state(alpha_start, g, v_start, policy.tol, policy.max_iter)
    states = [first]
    run = ContinuationRun(g, states, meta)

    geometric = policy.spacing == "geometric"
    if geometric:
        targets = list(np.geomspace(alpha_start, alpha_end, policy.n_points)[1:])
        targets[-1] = alpha_end
    else:
        targets = [alpha_end]

    step = policy.initial_step
    prev_prev: SteadyState | None = None
    cur = first
    for goal in targets:
        while cur.alpha < goal:
            lc = math.log(cur.alpha)
            remaining = math.log(goal) - lc
            h = step if geometric else min(step, policy.max_step)
            alpha = goal if h >= remaining else math.exp(lc + h)
            h = min(h, remaining)
            seed = cur.v
            if policy.secant and prev_prev is not None:
                seed = cur.v + (h / (lc - math.log(prev_prev.alpha))) * (cur.v - prev_prev.v)
            try:
                nxt = newton_solve(alpha, g, seed, policy.tol, policy.max_iter)
            except SolverError as exc:
                step *= policy.cut
                if step < policy.min_step:
                    run.truncated = True
                    run.diagnostic = f"possible fold near alpha={cur.alpha:.6g} ({exc})"
                    return run
                continue
            prev_prev, cur = cur, nxt
            if not geometric or alpha == goal:
                states.append(nxt)
            if nxt.newton_iters <= policy.easy_iters:
                step *= policy.grow
                if not geometric:
                    step = min(step, policy.max_step)
    return run


# -- manufactured forcing ----------------------------------------------------

@dataclass(frozen=True)
class ManufacturedForce:
    u: SpectralField
    g: SpectralField
    v_start: SpectralField
    alpha_start: float = 1.0


def sinusoidal_force(ms: ModeSet) -> ManufacturedForce:
    """The forcing generated by u = (sin z, sin x, 0) at alpha = 1.

    ``g = -u + B(u, u)``.  Since Au = u and B is quadratic, the exact steady
    state at alpha = 1 is ``v = -u``.
    """
    if ms.dimension != 3:
        raise ValueError("the sinusoidal forcing is three-dimensional")
    u = SpectralField.from_modes(ms, {(1, 0, 0): [0, -0.5j, 0], (0, 0, 1): [-0.5j, 0, 0]})
    g = -u + bilinear_B(u, u)
    return ManufacturedForce(u, g, -u)
