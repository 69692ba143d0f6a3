"""The shifted curvature preconditioner c*sym(Bt) + rho*I.

The measurement part A^T A of the Newton matrix has a modest spectrum for
nearly row-orthogonal A, while the smoothed-regularizer part dominates as
mu shrinks.  Replacing A^T A by rho*I therefore keeps the dominant term
and yields a target that is either

  * assembled explicitly and factorized with a symmetric banded Cholesky
    when the dictionary exposes its sparse stencil (2D gradients give a
    band equal to the pixel-column stride), or
  * applied approximately by a fixed number of plain CG iterations when
    only operator actions are available.

The fixed inner count keeps the approximate application (numerically) a
fixed linear action within one outer PCG solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh, eigvalsh

from .krylov import pcg_solve
from .linops import estimate_delta, to_dense
from .smoothing import SmoothedObjective

__all__ = [
    "Preconditioner",
    "build_preconditioner",
    "build_for_system",
    "SpectrumReport",
    "spectrum_report",
    "theorem_bound",
]

_MAX_SHIFT_DOUBLINGS = 60


@dataclass
class Preconditioner:
    """A fixed SPD linear action z -> approx (c*sym(Bt) + rho*I)^{-1} z."""

    mode: str
    rho: float
    action: Optional[Callable[[np.ndarray], np.ndarray]]
    rebuilds: int = 0
    inner: int = 0
    ntilde_matvec: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _assemble_sym_curvature(system) -> sp.spmatrix:
    """Explicit sparse sym(Bt) from the dictionary's Re/Im stencils.

    The analysis channels are rows of Re(W)^T and -Im(W)^T, so the
    coupling diagonal d23 enters the assembled cross blocks with its sign
    flipped relative to the matrix-free action.
    """
    parts = system.obj.W.re_im_parts
    if parts is None:
        raise ValueError(
            "exact banded preconditioning needs a dictionary with sparse "
            "Re/Im parts (2D gradient or dense dictionary)"
        )
    rw, iw = parts
    d1 = sp.diags(system.d1)
    d4 = sp.diags(system.d4)
    h = sp.diags(-system.d23)
    s = rw @ d1 @ rw.T + iw @ d4 @ iw.T + rw @ h @ iw.T + iw @ h @ rw.T
    return s.tocsr()


def _banded_upper(mat: sp.spmatrix) -> np.ndarray:
    """LAPACK upper-banded storage of a symmetric sparse matrix."""
    coo = mat.tocoo()
    bw = int(np.max(np.abs(coo.row - coo.col), initial=0))
    n = mat.shape[0]
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        ab[bw - k, k:] = mat.diagonal(k)
    return ab


def build_for_system(system, mode: str, rho: float, inner: int = 15) -> Preconditioner:
    """Build the preconditioner for one Newton system (duck-typed system
    from the solver module; see :func:`build_preconditioner` for the
    state-level entry point)."""
    if mode == "none":
        return Preconditioner("none", rho, None)

    c = system.obj.c
    if mode == "truncated_cg":

        def n_action(v, _rho=rho):
            return system.ntilde_matvec(v, _rho)

        def apply_approx(r):
            return pcg_solve(n_action, r, None, eta=0.0, cap=inner).solution

        return Preconditioner("truncated_cg", rho, apply_approx, inner=inner,
                              ntilde_matvec=n_action)

    if mode == "exact_banded":
        s = _assemble_sym_curvature(system)
        n = s.shape[0]
        eye = sp.identity(n, format="csr")
        rho_eff = rho
        rebuilds = 0
        for _ in range(_MAX_SHIFT_DOUBLINGS):
            try:
                cb = cholesky_banded(_banded_upper(c * s + rho_eff * eye), lower=False)
                break
            except np.linalg.LinAlgError:
                rho_eff *= 2.0
                rebuilds += 1
        else:
            raise np.linalg.LinAlgError("banded factorization failed at every shift")

        nt = (c * s + rho_eff * eye).tocsr()
        return Preconditioner(
            "exact_banded",
            rho_eff,
            lambda r: cho_solve_banded((cb, False), r),
            rebuilds=rebuilds,
            ntilde_matvec=lambda v: nt @ v,
        )

    raise ValueError(f"unknown preconditioner mode {mode!r}")


def build_preconditioner(state, obj: SmoothedObjective, config) -> Preconditioner:
    """Preconditioner at the state's current primal-dual point."""
    from .solver import NewtonSystem

    system = NewtonSystem(obj, state.x, state.g_re, state.g_im)
    return build_for_system(system, config.precond_mode, config.rho, config.precond_inner)


# ---------------------------------------------------------------------------
# Spectral diagnostics
# ---------------------------------------------------------------------------


@dataclass
class SpectrumReport:
    """Dense spectra of one Newton system and its preconditioned form.

    ``kernel_residuals[i]`` measures how much of the i-th preconditioned
    eigenvector survives the analysis rows with small Huber diagonal
    (the set where D_i >= nu): near-zero means the eigenvector sits in
    the kernel branch of the clustering bound, for which only the looser
    ``bound_kernel`` applies.
    """

    raw_eigs: np.ndarray
    precond_eigs: np.ndarray
    sigma: int
    nu: float
    delta: float
    chi: float
    bound: float
    bound_kernel: float
    kernel_residuals: np.ndarray


def theorem_bound(chi: float, denom: float) -> float:
    return 0.5 * (chi + 1.0 + np.sqrt(5.0 * chi**2 - 2.0 * chi + 1.0)) / denom


def spectrum_report(state, obj: SmoothedObjective, rho: float, nu: float) -> SpectrumReport:
    """Eigenvalues of Bhat and of its preconditioned form, plus the
    clustering-bound ingredients, all computed densely (n <= 4096)."""
    from .solver import NewtonSystem

    n = obj.n
    if n > 4096:
        raise ValueError(f"dense spectrum limited to n <= 4096, got {n}")

    system = NewtonSystem(obj, state.x, state.g_re, state.g_im)
    bd = np.empty((n, n))
    nd = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        bd[:, j] = system.bhat_matvec(e)
        nd[:, j] = system.ntilde_matvec(e, rho)
        e[j] = 0.0
    bd = 0.5 * (bd + bd.T)
    nd = 0.5 * (nd + nd.T)

    raw_eigs = eigvalsh(bd)
    pre_eigs, vecs = eigh(bd, nd)

    d = system.d
    sigma = int(np.sum(d < nu))
    outside = d >= nu  # complement of the small-diagonal set
    delta = estimate_delta(obj.A, 50)
    chi = 1.0 + delta - rho

    wd = to_dense(obj.W)
    lam_min = 0.0
    if np.any(outside):
        wc = wd[:, outside]
        gram = np.real(wc @ wc.conj().T)
        evals = eigvalsh(gram)
        tol = max(1e-12, float(np.max(np.abs(evals))) * 1e-10)
        positive = evals[evals > tol]
        if positive.size:
            lam_min = float(positive[0])

    bound = theorem_bound(chi, obj.c * obj.mu**2 * nu**3 * lam_min + rho)
    bound_kernel = theorem_bound(chi, rho)

    analysis = wd.conj().T @ vecs  # W* v for every eigenvector
    denom = np.linalg.norm(vecs, axis=0)
    kernel_residuals = np.linalg.norm(analysis[outside, :], axis=0) / np.maximum(denom, 1e-300)

    return SpectrumReport(
        raw_eigs=raw_eigs,
        precond_eigs=pre_eigs,
        sigma=sigma,
        nu=nu,
        delta=delta,
        chi=chi,
        bound=float(bound),
        bound_kernel=float(bound_kernel),
        kernel_residuals=kernel_residuals,
    )
