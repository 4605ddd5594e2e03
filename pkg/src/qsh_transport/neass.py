"""Inverse Liouvillian, first-order NEASS correction and the finite-epsilon state.

For a field along axis ``j`` the first-order correction is
``Pi_1 = I(i d_j Pi_0)`` where ``I`` inverts ``[H, .]`` on operators that
are off-diagonal with respect to ``Pi_0``.  The exact projector
``Pi_eps = exp(-i eps S) Pi_0 exp(i eps S)`` uses the Hermitian generator
``S = i I([i d_j Pi_0, Pi_0])``, which satisfies ``i [Pi_0, S] = Pi_1``.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import BZMesh
from .spectral import (GAP_TOL, SpectralFiber, cross_mask, from_eigenbasis, spectral_batch,
                       to_eigenbasis)

PROJECTOR_TOL = 1e-10


def _dagger(A):
    return np.conj(np.swapaxes(A, -1, -2))


def off_diagonal_part(A, P, check=True):
    """``P A (1 - P) + (1 - P) A P``."""
    A = np.asarray(A, dtype=complex)
    P = np.asarray(P, dtype=complex)
    if check and (np.abs(P @ P - P).max() > PROJECTOR_TOL or np.abs(P - _dagger(P)).max() > PROJECTOR_TOL):
        raise ValueError("P is not an orthogonal projector")
    Q = np.eye(P.shape[-1]) - P
    return P @ A @ Q + Q @ A @ P


def cross_inverse(E, n_occ):
    """``1 / (E_m - E_n)`` on pairs across the Fermi split, 0 elsewhere."""
    occ = np.zeros(E.shape, dtype=float)
    occ[..., :n_occ] = 1.0
    return cross_mask(E, n_occ) * (occ[..., :, None] - occ[..., None, :])


def inverse_liouvillian(spec, A):
    """Unique off-diagonal ``X`` with ``[H, X] = A^OD``.

    ``spec`` is a :class:`SpectralFiber` (or anything with ``energies``,
    ``vectors`` and ``n_occ``).  Works on stacks when those are stacked.
    """
    U = spec.vectors
    A_eig = to_eigenbasis(U, np.asarray(A, dtype=complex))
    return from_eigenbasis(U, A_eig * cross_inverse(spec.energies, spec.n_occ))


def generator_from_pi1(pi1_eig, n_occ):
    """Generator in the eigenbasis: ``-i Pi_1`` on (occ, unocc), ``+i Pi_1`` on (unocc, occ)."""
    M = pi1_eig.shape[-1]
    sign = np.zeros((M, M))
    sign[:n_occ, n_occ:] = -1.0
    sign[n_occ:, :n_occ] = 1.0
    return 1j * sign * pi1_eig


@dataclass(frozen=True, eq=False)
class NeassFiber:
    k: np.ndarray
    spectral: SpectralFiber
    dPj: np.ndarray
    Pi1: np.ndarray
    S_gen: np.ndarray
    sylvester_residual: float

    def Pi_eps(self, epsilon):
        return conjugate_by_generator(self.S_gen, self.spectral.projector, epsilon)


def conjugate_by_generator(S_gen, P, epsilon):
    """``exp(-i eps S) P exp(i eps S)`` through the eigendecomposition of ``S``."""
    if epsilon == 0:
        return np.array(P, copy=True)
    w, v = np.linalg.eigh(S_gen)
    phase = np.exp(-1j * epsilon * w)
    U = (v * phase[..., None, :]) @ _dagger(v)
    # a vanishing generator (k-independent projector) leaves P exactly unchanged
    zero = ~np.any(S_gen, axis=(-2, -1))
    U = np.where(zero[..., None, None], np.eye(P.shape[-1]), U)
    return U @ P @ _dagger(U)


def neass_fiber_data(model, k, mu=None, j=1, gap_tol=GAP_TOL):
    """All first-order NEASS ingredients at one k."""
    mu = model.mu if mu is None else mu
    sb = spectral_batch(model, np.asarray(k, dtype=float)[None], mu, gap_tol, workers=1)
    spec = SpectralFiber(sb.kpts[0], sb.energies[0], sb.vectors[0], sb.n_occ, sb.P[0])
    dPj = sb.dP[0, j - 1]
    pi1, gen = pi1_and_generator(sb.energies[0], sb.vectors[0], sb.n_occ, dPj)
    resid = float(np.abs(sb.H[0] @ pi1 - pi1 @ sb.H[0] - 1j * dPj).max())
    return NeassFiber(spec.k, spec, dPj, pi1, gen, resid)


def pi1_and_generator(E, U, n_occ, dPj):
    """``Pi_1 = I(i d_j Pi_0)`` and the NEASS generator, for a single k or a stack."""
    src = to_eigenbasis(U, 1j * dPj)
    pi1_eig = src * cross_inverse(E, n_occ)
    return from_eigenbasis(U, pi1_eig), from_eigenbasis(U, generator_from_pi1(pi1_eig, n_occ))


def pi1_fiber(model, k, mu=None, j=1):
    return neass_fiber_data(model, k, mu, j).Pi1


def neass_generator(model, k, mu=None, j=1):
    return neass_fiber_data(model, k, mu, j).S_gen


def neass_fiber(model, k, mu=None, j=1, epsilon=0.0):
    """Finite-epsilon NEASS projector at one k."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    return neass_fiber_data(model, k, mu, j).Pi_eps(epsilon)


def neass_batch(model, kpts, mu, j, epsilon, gap_tol=GAP_TOL):
    """``Pi_eps`` at a stack of k-points."""
    sb = spectral_batch(model, kpts, mu, gap_tol)
    _, gen = pi1_and_generator(sb.energies, sb.vectors, sb.n_occ, sb.dP[:, j - 1])
    return conjugate_by_generator(gen, sb.P, epsilon)


# ---------------------------------------------------------------------------
# Residual sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeReport:
    eps: tuple
    values: tuple
    slope: float
    intercept: float
    exact: bool = False

    def as_dict(self):
        return {"eps": list(self.eps), "residuals": list(self.values), "slope": self.slope,
                "intercept": self.intercept, "exact": self.exact}


def loglog_fit(xs, ys, zero_tol=1e-14):
    """Least-squares slope of ``log y`` against ``log x``; exact zeros give slope ``inf``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.all(ys <= zero_tol):
        return SlopeReport(tuple(xs), tuple(ys), float("inf"), float("-inf"), exact=True)
    slope, icpt = np.polyfit(np.log(xs), np.log(np.maximum(ys, 1e-300)), 1)
    return SlopeReport(tuple(xs), tuple(ys), float(slope), float(icpt))


FD5 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


def neass_residual_sweep(model, mesh, mu=None, j=1, eps_list=(1e-1, 3e-2, 1e-2), step=None, stencil=FD5):
    """Max over ``mesh`` of ``||[H_0, Pi_eps] - i eps d_j Pi_eps||`` for each epsilon.

    The k-derivative of ``Pi_eps`` is a central difference with step
    ``mesh.spacing / 8`` (default); ``stencil`` lists ``(offset, weight)``
    pairs in units of the step and defaults to the fourth-order formula.
    """
    mu = model.mu if mu is None else mu
    if len(eps_list) < 2:
        raise ValueError("need at least two epsilon values")
    spacing = mesh.spacing
    h = spacing / 8 if step is None else float(step)
    reach = max(abs(o) for o, _ in stencil) * h
    if reach > spacing / 2:
        raise ValueError(f"finite-difference stencil reaches {reach:.3g}, more than half the mesh spacing")
    kpts = mesh.kpts
    e = np.zeros(model.dimension)
    e[j - 1] = h
    sb = spectral_batch(model, kpts, mu)
    shifted = [(w, spectral_batch(model, kpts + o * e, mu)) for o, w in stencil]
    gens = [(w, pi1_and_generator(s.energies, s.vectors, s.n_occ, s.dP[:, j - 1])[1], s.P) for w, s in shifted]
    _, gen0 = pi1_and_generator(sb.energies, sb.vectors, sb.n_occ, sb.dP[:, j - 1])
    values = []
    for eps in eps_list:
        Pe = conjugate_by_generator(gen0, sb.P, eps)
        # differences against the centre make a k-independent state give exactly zero
        dPe = sum(w * (conjugate_by_generator(g, P, eps) - Pe) for w, g, P in gens) / h
        R = sb.H @ Pe - Pe @ sb.H - 1j * eps * dPe
        values.append(float(np.linalg.norm(R, ord=2, axis=(-2, -1)).max()))
    return loglog_fit(eps_list, values)


__all__ = [
    "BZMesh", "NeassFiber", "SlopeReport", "conjugate_by_generator", "cross_inverse", "inverse_liouvillian",
    "loglog_fit", "neass_batch", "neass_fiber", "neass_fiber_data", "neass_generator", "neass_residual_sweep",
    "off_diagonal_part", "pi1_and_generator", "pi1_fiber",
]
