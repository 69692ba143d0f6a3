"""Matrix-free linear operators for measurement and analysis maps.

Every operator is a pair of callables (``apply``, ``adjoint_apply``) plus
declared dimensions.  ``apply`` maps the input space (length ``cols``) to
the output space (length ``rows``); ``adjoint_apply`` goes the other way
and implements the conjugate transpose, so that for all u, v

    <apply(u), v> = <u, adjoint_apply(v)>

with the conjugate inner product ``vdot`` in the complex case.

Conventions for the 2D discrete-gradient dictionary:
  * images are stacked column-major (``order='F'``), pixel p = r + c*n1;
  * ``adjoint_apply(x)`` returns horizontal forward differences in the
    real part and vertical forward differences in the imaginary part;
  * forward differences are zero at the trailing column/row (Neumann
    boundary), which makes the dense analysis matrix rank n-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.fft import dctn, idctn

__all__ = [
    "LinearOperator",
    "SamplingMask",
    "make_mask",
    "make_gradient2d",
    "make_partial_dct2",
    "make_partial_walsh01",
    "make_dense_dictionary",
    "make_zero_operator",
    "estimate_delta",
    "to_dense",
]


@dataclass(frozen=True)
class LinearOperator:
    """A linear map available only through its action.

    Parameters
    ----------
    rows, cols : int
        Output and input dimensions of ``apply``.
    field : {"real", "complex"}
        Codomain scalar field of ``apply``.
    apply : callable
        Maps a length-``cols`` vector to a length-``rows`` vector.
    adjoint_apply : callable
        Maps a length-``rows`` vector to a length-``cols`` vector;
        implements the conjugate transpose of ``apply``.
    re_im_parts : tuple of sparse matrices, optional
        ``(Re(M), Im(M))`` of the represented matrix M when a sparse
        materialization is cheap (gradient stencils, dense dictionaries).
        Required by the exact banded preconditioner; ``None`` otherwise.
    """

    rows: int
    cols: int
    field: str
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint_apply: Callable[[np.ndarray], np.ndarray]
    re_im_parts: Optional[Tuple[sp.spmatrix, sp.spmatrix]] = field(
        default=None, repr=False
    )
    # optional fast kernels; semantics fixed by the module helpers below
    fast_synth_real: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )
    fast_analysis_parts: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("operator dimensions must be positive")
        if self.field not in ("real", "complex"):
            raise ValueError("field must be 'real' or 'complex'")


def synth_real(op: LinearOperator, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Re( op.apply(p + i q) ) for real p, q, using a fast kernel if present."""
    if op.fast_synth_real is not None:
        return op.fast_synth_real(p, q)
    out = op.apply(p + 1j * q)
    return np.real(out) if np.iscomplexobj(out) else out


def analysis_parts(op: LinearOperator, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(Re, Im) of op.adjoint_apply(v) for real v, via a fast kernel if present."""
    if op.fast_analysis_parts is not None:
        return op.fast_analysis_parts(v)
    u = op.adjoint_apply(v)
    if np.iscomplexobj(u):
        return np.ascontiguousarray(u.real), np.ascontiguousarray(u.imag)
    return u, np.zeros_like(u)


@dataclass(frozen=True)
class SamplingMask:
    """Strictly increasing, duplicate-free row indices plus the seed used."""

    selected_indices: np.ndarray
    seed: int

    def __post_init__(self):
        idx = np.asarray(self.selected_indices, dtype=np.int64)
        object.__setattr__(self, "selected_indices", idx)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("mask must be a nonempty 1D index array")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("mask indices must be strictly increasing")
        if idx[0] < 0:
            raise ValueError("mask indices must be nonnegative")

    def __len__(self) -> int:
        return int(self.selected_indices.size)


def make_mask(n: int, m: int, seed: int, include_first: bool = False) -> SamplingMask:
    """Draw m distinct indices from [0, n) without replacement.

    Uses numpy's PCG64 generator so masks are reproducible from the seed.
    With ``include_first`` index 0 is always selected; partial transforms
    whose first row spans the constant vector need it so that the
    measurement operator sees the image mean.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    if include_first:
        rest = rng.choice(np.arange(1, n), size=m - 1, replace=False)
        idx = np.concatenate(([0], rest))
    else:
        idx = rng.choice(n, size=m, replace=False)
    return SamplingMask(np.sort(idx), seed)


# ---------------------------------------------------------------------------
# 2D discrete gradient (complex encoding)
# ---------------------------------------------------------------------------


def _grad2d_channels(x: np.ndarray, n1: int, n2: int) -> Tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical forward differences as two real images."""
    im = x.reshape((n1, n2), order="F")
    h = np.zeros((n1, n2))
    v = np.zeros((n1, n2))
    np.subtract(im[:, 1:], im[:, :-1], out=h[:, :-1])
    np.subtract(im[1:, :], im[:-1, :], out=v[:-1, :])
    return h.ravel(order="F"), v.ravel(order="F")


def _grad2d_analysis(x: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Forward differences of a column-stacked image, horizontal -> real,
    vertical -> imaginary, zero at the trailing column/row."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        hr, vr = _grad2d_channels(x.real, n1, n2)
        hi, vi = _grad2d_channels(x.imag, n1, n2)
        return (hr - vi) + 1j * (hi + vr)
    h, v = _grad2d_channels(x, n1, n2)
    out = np.empty(n1 * n2, dtype=np.complex128)
    out.real = h
    out.imag = v
    return out


def _grad2d_synth_channels(p: np.ndarray, q: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Real part of the synthesis of channel pair (p, q): the negative
    divergence built from the transposed difference stencils."""
    P = p.reshape((n1, n2), order="F")
    Q = q.reshape((n1, n2), order="F")
    out = np.zeros((n1, n2))
    out[:, :-1] -= P[:, :-1]
    out[:, 1:] += P[:, :-1]
    out[:-1, :] -= Q[:-1, :]
    out[1:, :] += Q[:-1, :]
    return out.ravel(order="F")


def _grad2d_synthesis(z: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Adjoint of :func:`_grad2d_analysis`."""
    z = np.asarray(z, dtype=np.complex128)
    re = _grad2d_synth_channels(z.real.copy(), z.imag.copy(), n1, n2)
    im = _grad2d_synth_channels(z.imag.copy(), -z.real, n1, n2)
    out = np.empty(n1 * n2, dtype=np.complex128)
    out.real = re
    out.imag = im
    return out


def _grad2d_sparse_parts(n1: int, n2: int) -> Tuple[sp.spmatrix, sp.spmatrix]:
    """Sparse Re/Im parts of the synthesis matrix W (W* is the analysis map)."""
    n = n1 * n2
    # horizontal difference matrix D_h: row p, entries -1 at p, +1 at p+n1
    keep_h = np.arange(n)[np.arange(n) // n1 < n2 - 1]
    dh = sp.coo_matrix(
        (
            np.concatenate((-np.ones(keep_h.size), np.ones(keep_h.size))),
            (np.concatenate((keep_h, keep_h)), np.concatenate((keep_h, keep_h + n1))),
        ),
        shape=(n, n),
    ).tocsr()
    keep_v = np.arange(n)[np.arange(n) % n1 < n1 - 1]
    dv = sp.coo_matrix(
        (
            np.concatenate((-np.ones(keep_v.size), np.ones(keep_v.size))),
            (np.concatenate((keep_v, keep_v)), np.concatenate((keep_v, keep_v + 1))),
        ),
        shape=(n, n),
    ).tocsr()
    # W* = D_h + i D_v, so W = D_h^T - i D_v^T
    return dh.T.tocsr(), (-dv.T).tocsr()


def make_gradient2d(n1: int, n2: int) -> LinearOperator:
    """Complex 2D discrete-gradient dictionary for an n1 x n2 image.

    ``adjoint_apply`` computes the analysis map (the gradient itself);
    ``apply`` is the synthesis map.  The dense analysis matrix is square,
    complex and has rank n1*n2 - 1 (constants are in its kernel).
    """
    if n1 < 2 or n2 < 2:
        raise ValueError("gradient2d needs both image dimensions >= 2")
    n = n1 * n2
    return LinearOperator(
        rows=n,
        cols=n,
        field="complex",
        apply=lambda z: _grad2d_synthesis(z, n1, n2),
        adjoint_apply=lambda x: _grad2d_analysis(x, n1, n2),
        re_im_parts=_grad2d_sparse_parts(n1, n2),
        fast_synth_real=lambda p, q: _grad2d_synth_channels(p, q, n1, n2),
        fast_analysis_parts=lambda v: _grad2d_channels(v, n1, n2),
    )


# ---------------------------------------------------------------------------
# Partial orthonormal 2D DCT
# ---------------------------------------------------------------------------


def _require_power_of_two(k: int, what: str) -> None:
    if k < 2 or (k & (k - 1)) != 0:
        raise ValueError(f"{what} must be a power of two >= 2, got {k}")


def make_partial_dct2(n1: int, n2: int, mask: SamplingMask) -> LinearOperator:
    """Row selection of the orthonormal 2D DCT-II of a column-stacked image."""
    _require_power_of_two(n1, "n1")
    _require_power_of_two(n2, "n2")
    n = n1 * n2
    idx = mask.selected_indices
    if idx[-1] >= n:
        raise ValueError("mask indices exceed image size")
    m = len(mask)

    def apply(x):
        coeff = dctn(
            np.asarray(x, dtype=np.float64).reshape((n1, n2), order="F"),
            norm="ortho",
        )
        return coeff.ravel(order="F")[idx]

    def adjoint_apply(v):
        full = np.zeros(n)
        full[idx] = v
        return idctn(full.reshape((n1, n2), order="F"), norm="ortho").ravel(order="F")

    return LinearOperator(rows=m, cols=n, field="real", apply=apply, adjoint_apply=adjoint_apply)


# ---------------------------------------------------------------------------
# Partial 0/1 Walsh basis
# ---------------------------------------------------------------------------


def _fwht(x: np.ndarray) -> np.ndarray:
    """Fast Hadamard transform, Sylvester (natural) ordering, +-1 entries."""
    a = np.array(x, dtype=np.float64)
    n = a.shape[0]
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        top = a[:, 0, :] + a[:, 1, :]
        bot = a[:, 0, :] - a[:, 1, :]
        a = np.stack((top, bot), axis=1).reshape(n)
        h *= 2
    return a


def make_partial_walsh01(n: int, mask: SamplingMask) -> LinearOperator:
    """Selected rows of (H + 1)/2, H the +-1 Hadamard matrix of order n.

    Applied as half the fast Hadamard transform plus half the all-ones
    rank-one term, so nothing dense is ever stored.
    """
    _require_power_of_two(n, "n")
    idx = mask.selected_indices
    if idx[-1] >= n:
        raise ValueError("mask indices exceed transform size")
    m = len(mask)

    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        return 0.5 * (_fwht(x)[idx] + x.sum())

    def adjoint_apply(v):
        full = np.zeros(n)
        full[idx] = v
        return 0.5 * (_fwht(full) + full.sum())

    return LinearOperator(rows=m, cols=n, field="real", apply=apply, adjoint_apply=adjoint_apply)


# ---------------------------------------------------------------------------
# Dense operators and helpers
# ---------------------------------------------------------------------------


def make_dense_dictionary(entries: np.ndarray, field: str = "real") -> LinearOperator:
    """Wrap an explicit matrix; used for small oracles and unit tests."""
    mat = np.asarray(entries, dtype=np.complex128 if field == "complex" else np.float64)
    if mat.ndim != 2:
        raise ValueError("entries must be a 2D array")
    if not np.all(np.isfinite(mat.real)) or not np.all(np.isfinite(mat.imag)):
        raise ValueError("entries must be finite")
    rows, cols = mat.shape
    re = sp.csr_matrix(np.ascontiguousarray(mat.real))
    imag = sp.csr_matrix(np.ascontiguousarray(mat.imag))
    return LinearOperator(
        rows=rows,
        cols=cols,
        field=field,
        apply=lambda z: mat @ z,
        adjoint_apply=lambda x: mat.conj().T @ x,
        re_im_parts=(re, imag),
    )


def make_zero_operator(rows: int, cols: int) -> LinearOperator:
    """The zero map; handy for isolating regularizer-only behaviour."""
    return LinearOperator(
        rows=rows,
        cols=cols,
        field="real",
        apply=lambda x: np.zeros(rows),
        adjoint_apply=lambda v: np.zeros(cols),
    )


def to_dense(op: LinearOperator) -> np.ndarray:
    """Materialize an operator column by column (test/oracle use only)."""
    dtype = np.complex128 if op.field == "complex" else np.float64
    out = np.empty((op.rows, op.cols), dtype=dtype)
    e = np.zeros(op.cols)
    for j in range(op.cols):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


def estimate_delta(A: LinearOperator, iterations: int = 50) -> float:
    """Power-iteration estimate of || A A^T - I ||_2 for a real operator.

    The returned value is nondecreasing in ``iterations`` and approaches
    the spectral norm from below (norm-ratio estimate on the symmetric
    matrix A A^T - I, fixed deterministic start vector).
    """
    if A.field != "real":
        raise ValueError("row-orthogonality estimate is defined for real operators")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    def action(v):
        return A.apply(A.adjoint_apply(v)) - v

    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(A.rows)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = action(v)
        norm = np.linalg.norm(w)
        if norm == 0.0 or norm < 1e-300:
            return 0.0
        est = norm
        v = w / norm
    return float(est)
