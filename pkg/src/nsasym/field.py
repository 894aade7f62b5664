"""Divergence-free periodic vector fields in truncated Fourier form.

Two norms are in play.  The H-norm ``|u|`` is the L^2 norm on the torus
[0, 2pi]^d, ``|u|^2 = (2pi)^d * sum over the full lattice of |u_k|^2``.
The coefficient norm ``||u||_Z`` sums over the canonical half lattice
only, so ``|u|^2 = 2 (2pi)^d ||u||_Z^2``.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from nsasym.modes import ModeSet

DIVFREE_TOL = 1e-12


class ModeSetMismatch(ValueError):
    pass


def _check_same(*fields: "SpectralField") -> ModeSet:
    ms = fields[0].mode_set
    for f in fields[1:]:
        if f.mode_set != ms:
            raise ModeSetMismatch(f"mismatched ModeSet: {ms!r} vs {f.mode_set!r}")
    return ms


class SpectralField:
    """Real vector field given by complex coefficients on canonical modes.

    ``coeffs`` has shape (M, d).  Instances are immutable; arithmetic
    returns new fields.
    """

    __slots__ = ("mode_set", "coeffs")

    def __init__(self, mode_set: ModeSet, coeffs: np.ndarray | None = None):
        shape = (len(mode_set), mode_set.dimension)
        if coeffs is None:
            c = np.zeros(shape, dtype=complex)
        else:
            c = np.array(coeffs, dtype=complex)
            if c.shape != shape:
                raise ValueError(f"coefficient array has shape {c.shape}, expected {shape}")
        c.setflags(write=False)
        self.mode_set = mode_set
        self.coeffs = c

    # -- constructors ----------------------------------------------------
    @classmethod
    def zeros(cls, mode_set: ModeSet) -> "SpectralField":
        return cls(mode_set)

    @classmethod
    def from_modes(cls, mode_set: ModeSet, entries: Mapping[Sequence[int], Sequence[complex]]) -> "SpectralField":
        """Build from {wave vector: coefficient vector}.

        Entries given at a non-canonical k are conjugated onto the stored
        representative.  Giving both k and -k is allowed only if they are
        consistent with the reality condition.
        """
        c = np.zeros((len(mode_set), mode_set.dimension), dtype=complex)
        seen: dict[int, np.ndarray] = {}
        for k, vec in entries.items():
            i, conj = mode_set.index(k)
            vec = np.asarray(vec, dtype=complex)
            if conj:
                vec = vec.conj()
            if i in seen:
                if not np.allclose(seen[i], vec, atol=1e-14):
                    raise ValueError(f"entries at {k} and its opposite violate the reality condition")
                continue
            seen[i] = vec
            c[i] = vec
        return cls(mode_set, c)

    @classmethod
    def from_real(cls, mode_set: ModeSet, x: np.ndarray) -> "SpectralField":
        M, d = len(mode_set), mode_set.dimension
        x = np.asarray(x, dtype=float)
        n = M * d
        return cls(mode_set, (x[:n] + 1j * x[n:]).reshape(M, d))

    @classmethod
    def random(cls, mode_set: ModeSet, rng: np.random.Generator, scale: float = 1.0,
               divergence_free: bool = True) -> "SpectralField":
        shape = (len(mode_set), mode_set.dimension)
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        f = cls(mode_set, scale * c)
        return leray_project(f) if divergence_free else f

    # -- flattening ------------------------------------------------------
    def to_real(self) -> np.ndarray:
        """Real unknowns [Re c, Im c], each flattened mode-major."""
        return np.concatenate([self.coeffs.real.ravel(), self.coeffs.imag.ravel()])

    def full_coeffs(self) -> np.ndarray:
        """Coefficients on the full lattice (modes, then -modes)."""
        return np.concatenate([self.coeffs, self.coeffs.conj()])

    def coefficient(self, k: Sequence[int]) -> np.ndarray:
        i, conj = self.mode_set.index(k)
        v = self.coeffs[i]
        return v.conj() if conj else v.copy()

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.mode_set, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.mode_set, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.mode_set, -self.coeffs)

    def __mul__(self, s: complex) -> "SpectralField":
        return SpectralField(self.mode_set, self.coeffs * s)

    __rmul__ = __mul__

    def __truediv__(self, s: complex) -> "SpectralField":
        return SpectralField(self.mode_set, self.coeffs / s)

    def __repr__(self) -> str:
        return f"SpectralField({self.mode_set!r}, znorm={self.znorm():.6g})"

    # -- norms -----------------------------------------------------------
    def znorm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def hnorm(self) -> float:
        return math.sqrt(2.0 * (2 * math.pi) ** self.mode_set.dimension) * self.znorm()

    def vnorm(self) -> float:
        """Dirichlet norm ||u|| = |A^{1/2} u|."""
        k2 = self.mode_set.k_squared[:, None]
        z = float(np.sqrt(np.sum(k2 * np.abs(self.coeffs) ** 2)))
        return math.sqrt(2.0 * (2 * math.pi) ** self.mode_set.dimension) * z

    def is_divergence_free(self, tol: float = DIVFREE_TOL) -> bool:
        div = np.abs(np.einsum("md,md->m", self.mode_set.modes.astype(float), self.coeffs))
        mag = np.linalg.norm(self.coeffs, axis=1)
        return bool(np.all(div <= tol * np.maximum(mag, 1e-300) + 1e-300))

    # -- physical space --------------------------------------------------
    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Field values at points x (shape (..., d)); returns complex values.

        The imaginary part vanishes up to rounding by the reality condition.
        """
        x = np.asarray(x, dtype=float)
        phase = np.exp(1j * (x @ self.mode_set.modes.T.astype(float)))  # (..., M)
        val = phase @ self.coeffs
        return val + (phase.conj() @ self.coeffs.conj())


# -- operators -----------------------------------------------------------

def projector_matrices(mode_set: ModeSet) -> np.ndarray:
    """Per-mode Leray projectors I - k k^T / |k|^2, shape (M, d, d)."""
    k = mode_set.modes.astype(float)
    k2 = mode_set.k_squared
    eye = np.eye(mode_set.dimension)
    return eye[None] - k[:, :, None] * k[:, None, :] / k2[:, None, None]


def project_coeffs(mode_set: ModeSet, c: np.ndarray) -> np.ndarray:
    k = mode_set.modes.astype(float)
    kc = np.einsum("md,md->m", k, c)
    return c - (kc / mode_set.k_squared)[:, None] * k


def leray_project(f: SpectralField) -> SpectralField:
    return SpectralField(f.mode_set, project_coeffs(f.mode_set, f.coeffs))


def stokes_apply(u: SpectralField) -> SpectralField:
    return SpectralField(u.mode_set, u.mode_set.k_squared[:, None] * u.coeffs)


def stokes_solve(f: SpectralField) -> SpectralField:
    """A^{-1} f."""
    return SpectralField(f.mode_set, f.coeffs / f.mode_set.k_squared[:, None])


def z_inner(u: SpectralField, v: SpectralField) -> float:
    """Real inner product inducing ||.||_Z."""
    _check_same(u, v)
    return float(np.real(np.sum(u.coeffs * v.coeffs.conj())))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L^2 inner product <u, v> on [0, 2pi]^d."""
    return 2.0 * (2 * math.pi) ** u.mode_set.dimension * z_inner(u, v)


def curl_basis_field(mode_set: ModeSet, k: Sequence[int], z: complex = 1.0) -> SpectralField:
    """2D single-pair field z (e3 x k) E_k + conj, the curl-basis element."""
    if mode_set.dimension != 2:
        raise ValueError("curl basis is two-dimensional")
    vec = np.array([-k[1], k[0]], dtype=complex) * z
    return SpectralField.from_modes(mode_set, {tuple(k): vec})


# -- text format -----------------------------------------------------------

def format_field(f: SpectralField) -> str:
    ms = f.mode_set
    lam = ms.lambda_cut if ms.lambda_cut is not None else float(ms.k_squared.max())
    lines = [f"# d={ms.dimension} lambda={lam:.17g}"]
    for k, c in zip(ms.modes.tolist(), f.coeffs):
        parts = [str(x) for x in k]
        for z in c:
            parts.append(f"{z.real:.17g}")
            parts.append(f"{z.imag:.17g}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_field(text: str, mode_set: ModeSet | None = None) -> SpectralField:
    """Inverse of :func:`format_field`.

    If ``mode_set`` is omitted the mode set is rebuilt from the listed
    wave vectors; a mode set matching ``enumerate_modes(d, lambda)`` is
    reused when the listed vectors coincide with it.
    """
    header = None
    rows: list[list[str]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = line
            continue
        rows.append(line.split())
    if header is None:
        raise ValueError("missing '# d=<d> lambda=<L>' header")
    meta = dict(tok.split("=", 1) for tok in header[1:].split())
    d = int(meta["d"])
    lam = float(meta["lambda"])
    for r in rows:
        if len(r) != 3 * d:
            raise ValueError(f"expected {3 * d} columns per row, got {len(r)}")
    ks = [tuple(int(x) for x in r[:d]) for r in rows]
    if mode_set is None:
        mode_set = ModeSet(d, ks, lambda_cut=lam)
    entries = {}
    for k, r in zip(ks, rows):
        vals = [float(x) for x in r[d:]]
        entries[k] = [complex(vals[2 * i], vals[2 * i + 1]) for i in range(d)]
    return SpectralField.from_modes(mode_set, entries)


def write_field(path, f: SpectralField) -> None:
    with open(path, "w") as fh:
        fh.write(format_field(f))


def read_field(path, mode_set: ModeSet | None = None) -> SpectralField:
    with open(path) as fh:
        return parse_field(fh.read(), mode_set)


def stack_real(fields: Iterable[SpectralField]) -> np.ndarray:
    return np.array([f.to_real() for f in fields])
