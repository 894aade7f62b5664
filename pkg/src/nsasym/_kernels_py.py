"""Pure numpy implementation of the triad kernels.

Both functions work on unprojected advection coefficients; the caller
applies the Leray projector.  Argument conventions match ``_kernels.pyx``:

kvec : (M, d) float64, canonical target wave vectors
t, p, q : int64 triad index arrays (see ``ModeSet.triads``)
uf, vf : (2M, d) complex128 full-lattice coefficients
"""

import numpy as np


def convolve(kvec, t, p, q, uf, vf):
    """Coefficients of (u . grad) v at the canonical targets."""
    M, d = kvec.shape
    kdotu = np.einsum("nd,nd->n", kvec[t], uf[p])
    terms = (1j * kdotu)[:, None] * vf[q]
    out = np.zeros((M, d), dtype=complex)
    np.add.at(out, t, terms)
    return out


def linearize_first(kvec, t, p, q, uf):
    """Matrices (L1, L2) of w -> conv(u, w), i.e. i (k . u_p) w_q."""
    M, d = kvec.shape
    n = M * d
    L = np.zeros((2, n, n), dtype=complex)
    b = np.arange(d)
    kdotu = 1j * np.einsum("nd,nd->n", kvec[t], uf[p])
    half = (q >= M).astype(np.int64)
    qc = q - M * half
    rows = (t[:, None] * d + b[None, :]).ravel()
    cols = (qc[:, None] * d + b[None, :]).ravel()
    np.add.at(L, (np.repeat(half, d), rows, cols), np.repeat(kdotu, d))
    return L[0], L[1]


def linearize_second(kvec, t, p, q, vf):
    """Matrices (L1, L2) of w -> conv(w, v), i.e. i (k . w_p) v_q."""
    M, d = kvec.shape
    n = M * d
    L = np.zeros((2, n, n), dtype=complex)
    b = np.arange(d)
    half = (p >= M).astype(np.int64)
    pc = p - M * half
    # rows (t, bb), cols (pc, a), value i k[t, a] v_q[bb]
    vals = 1j * kvec[t][:, None, :] * vf[q][:, :, None]  # (T, bb, a)
    rows = np.broadcast_to((t[:, None, None] * d + b[None, :, None]), vals.shape).ravel()
    cols = np.broadcast_to((pc[:, None, None] * d + b[None, None, :]), vals.shape).ravel()
    which = np.broadcast_to(half[:, None, None], vals.shape).ravel()
    np.add.at(L, (which, rows, cols), vals.ravel())
    return L[0], L[1]


def linearize(kvec, t, p, q, vf):
    """Matrices (L1, L2) with conv(v, w) + conv(w, v) = L1 c + L2 conj(c).

    ``c`` is the canonical coefficient array of ``w`` flattened mode-major,
    so both matrices are (M*d, M*d).
    """
    A1, A2 = linearize_first(kvec, t, p, q, vf)
    C1, C2 = linearize_second(kvec, t, p, q, vf)
    return A1 + C1, A2 + C2
