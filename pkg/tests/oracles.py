"""Independent reference computations shared by the test modules."""

import math

import numpy as np

from nsasym.field import SpectralField, leray_project
from nsasym.solver import jacobian, residual

GRID = 16
FD_EPS = np.array([1e-4, 1e-5, 1e-6, 1e-7, 1e-8])


def to_grid(f: SpectralField) -> np.ndarray:
    """Physical values on a GRID^d lattice via inverse FFT, shape (d, N, ..., N)."""
    d = f.mode_set.dimension
    hat = np.zeros((d,) + (GRID,) * d, dtype=complex)
    for k, c in zip(np.concatenate([f.mode_set.modes, -f.mode_set.modes]), f.full_coeffs()):
        hat[(slice(None),) + tuple(k % GRID)] = c
    return np.fft.ifftn(hat, axes=range(1, d + 1)).real * GRID**d


def oracle_B(u: SpectralField, v: SpectralField) -> SpectralField:
    """(u . grad) v by spectral derivatives and pointwise products, then project."""
    ms = u.mode_set
    d = ms.dimension
    ug = to_grid(u)
    vhat = np.fft.fftn(to_grid(v), axes=range(1, d + 1))
    freq = np.fft.fftfreq(GRID, 1.0 / GRID)
    wave = np.meshgrid(*([freq] * d), indexing="ij")
    adv = np.zeros_like(ug)
    for a in range(d):
        adv += ug[a] * np.fft.ifftn(1j * wave[a] * vhat, axes=range(1, d + 1)).real
    prod = np.fft.fftn(adv, axes=range(1, d + 1)) / GRID**d
    c = np.array([prod[(slice(None),) + tuple(k % GRID)] for k in ms.modes])
    return leray_project(SpectralField(ms, c))


def fd_errors(v, w, alpha, g, eps=FD_EPS) -> np.ndarray:
    """|(r(v + eps w) - r(v)) / eps - J w| for each eps."""
    J = jacobian(v, alpha) @ w.to_real()
    r0 = residual(v, alpha, g)
    return np.array([np.linalg.norm((residual(v + e * w, alpha, g) - r0).to_real() / e - J) for e in eps])


def fd_slope(v, w, alpha, g, eps=FD_EPS):
    err = fd_errors(v, w, alpha, g, eps)
    return float(np.polyfit(np.log(eps), np.log(err), 1)[0]), err


def case_table_2d(k):
    """The 2D k' rules of the witness construction, written out independently."""
    k1, k2 = k
    if k1 >= 2:
        return (0, 1)
    if k1 == 1:
        return (0, 2) if k2 == 0 else (0, 1)
    return (1, 0) if abs(k2) >= 2 else (2, 0)


def admissible_field(ms, rng) -> SpectralField:
    """Random nonzero field supported in |k| <= sqrt(lambda) - 1."""
    r = math.sqrt(ms.lambda_cut) - 1
    allowed = np.flatnonzero(np.sqrt(ms.k_squared) <= r + 1e-12)
    pick = rng.choice(allowed, size=rng.integers(1, len(allowed) + 1), replace=False)
    c = np.zeros((len(ms), ms.dimension), dtype=complex)
    shape = (len(pick), ms.dimension)
    c[pick] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return leray_project(SpectralField(ms, c))
