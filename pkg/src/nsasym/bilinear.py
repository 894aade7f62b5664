"""Galerkin bilinear operators B, B_s and their linearization."""

from __future__ import annotations

import numpy as np

from nsasym import _kernels_py, kernels
from nsasym.field import SpectralField, _check_same, project_coeffs, projector_matrices
from nsasym.modes import ModeSet


def _kvec(ms: ModeSet) -> np.ndarray:
    return np.ascontiguousarray(ms.modes, dtype=float)


def advection_coeffs(u: SpectralField, v: SpectralField, backend: str | None = None) -> np.ndarray:
    """Unprojected coefficients of (u . grad) v on the mode set."""
    ms = _check_same(u, v)
    t, p, q = ms.triads()
    impl = kernels.get(backend)
    return impl.convolve(_kvec(ms), t, p, q,
                         np.ascontiguousarray(u.full_coeffs()),
                         np.ascontiguousarray(v.full_coeffs()))


def bilinear_B(u: SpectralField, v: SpectralField, backend: str | None = None) -> SpectralField:
    """B(u, v): Leray projection of (u . grad) v truncated to the mode set."""
    ms = u.mode_set
    return SpectralField(ms, project_coeffs(ms, advection_coeffs(u, v, backend)))


def bilinear_Bs(u: SpectralField, v: SpectralField, backend: str | None = None) -> SpectralField:
    ms = _check_same(u, v)
    X = advection_coeffs(u, v, backend) + advection_coeffs(v, u, backend)
    return SpectralField(ms, project_coeffs(ms, X))


def _real_matrix(ms: ModeSet, L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    """Project rows and convert X = L1 c + L2 conj(c) to a real matrix."""
    M, d = len(ms), ms.dimension
    P = projector_matrices(ms)
    n = M * d
    L1 = np.einsum("mba,man->mbn", P, L1.reshape(M, d, n)).reshape(n, n)
    L2 = np.einsum("mba,man->mbn", P, L2.reshape(M, d, n)).reshape(n, n)
    S, D = L1 + L2, L1 - L2
    return np.block([[S.real, -D.imag], [S.imag, D.real]])


def bs_real_matrix(v: SpectralField, backend: str | None = None) -> np.ndarray:
    """Real matrix of w -> B_s(v, w) acting on ``w.to_real()``."""
    ms = v.mode_set
    t, p, q = ms.triads()
    impl = kernels.get(backend)
    L1, L2 = impl.linearize(_kvec(ms), t, p, q, np.ascontiguousarray(v.full_coeffs()))
    return _real_matrix(ms, L1, L2)


def b_real_matrix(u: SpectralField, slot: int) -> np.ndarray:
    """Real matrix of w -> B(u, w) (slot=1) or w -> B(w, u) (slot=2)."""
    ms = u.mode_set
    t, p, q = ms.triads()
    fn = {1: _kernels_py.linearize_first, 2: _kernels_py.linearize_second}[slot]
    L1, L2 = fn(_kvec(ms), t, p, q, u.full_coeffs())
    return _real_matrix(ms, L1, L2)


def stokes_real_diagonal(ms: ModeSet) -> np.ndarray:
    k2 = np.repeat(ms.k_squared, ms.dimension)
    return np.concatenate([k2, k2])
