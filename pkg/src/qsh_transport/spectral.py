"""Eigen-decomposition of Bloch fibers, Fermi projectors and gap checks."""

from dataclasses import dataclass

import numpy as np

from .mesh import BZMesh, map_chunks
from .model import bloch_batch

GAP_TOL = 1e-9


class GapError(ValueError):
    """The Fermi level touches the spectrum, or the occupied rank varies."""

    def __init__(self, message, k=None):
        self.k = None if k is None else np.asarray(k, dtype=float)
        if k is not None:
            message = f"{message} at k = {np.array2string(self.k, precision=6)}"
        super().__init__(message)


def hermitian_defect(H):
    return float(np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max()) if np.size(H) else 0.0


def eigensystem(H, tol=1e-12):
    """Ascending eigenvalues and eigenvectors (columns) with a fixed phase.

    Works on a single matrix or on a stack.  The largest-modulus component
    of every eigenvector is made real and positive.
    """
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.abs(H).max())) if H.size else 1.0
    if hermitian_defect(H) > tol * scale:
        raise ValueError(f"matrix is not Hermitian (defect {hermitian_defect(H):.3e})")
    E, U = np.linalg.eigh(H)
    return E, fix_phases(U)


def fix_phases(U):
    pivot = np.argmax(np.abs(U), axis=-2)[..., None, :]
    lead = np.take_along_axis(U, pivot, axis=-2)
    return U * (np.conj(lead) / np.abs(lead))


def occupied_count(E, mu, gap_tol=GAP_TOL, k=None):
    """Number of eigenvalues strictly below ``mu``; raises when one is within ``gap_tol``."""
    E = np.atleast_2d(E)
    dist = np.abs(E - mu).min(axis=-1)
    bad = np.flatnonzero(dist <= gap_tol)
    if bad.size:
        where = None if k is None else np.atleast_2d(k)[bad[0]]
        raise GapError(f"eigenvalue within {gap_tol:g} of mu = {mu:g}", where)
    return (E < mu).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class SpectralFiber:
    k: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    n_occ: int
    projector: np.ndarray


def spectral_fiber(H, mu, k=None, gap_tol=GAP_TOL):
    E, U = eigensystem(H)
    m = int(occupied_count(E, mu, gap_tol, None if k is None else [k])[0])
    occ = U[:, :m]
    return SpectralFiber(None if k is None else np.asarray(k), E, U, m, occ @ occ.conj().T)


def fermi_projector(H, mu, gap_tol=GAP_TOL):
    """``Pi_0 = sum_{E_n < mu} u_n u_n^*`` for a single Bloch matrix."""
    return spectral_fiber(H, mu, gap_tol=gap_tol).projector


def cross_mask(E, n_occ):
    """``(pi_a - pi_b) / (E_a - E_b)`` for pairs across the Fermi split, 0 otherwise.

    ``pi`` is the occupation (1 below mu); ``E`` may be a stack.
    """
    occ = np.zeros(E.shape, dtype=float)
    occ[..., :n_occ] = 1.0
    dpi = occ[..., :, None] - occ[..., None, :]
    dE = E[..., :, None] - E[..., None, :]
    out = np.zeros_like(dE)
    np.divide(dpi, dE, out=out, where=dpi != 0)
    return out


def to_eigenbasis(U, A):
    return np.conj(np.swapaxes(U, -1, -2)) @ A @ U


def from_eigenbasis(U, A):
    return U @ A @ np.conj(np.swapaxes(U, -1, -2))


@dataclass(frozen=True, eq=False)
class SpectralBatch:
    """Spectral data on a list of k-points; every array has k as leading axis.

    ``dH`` and ``dP`` have shape ``(K, d, M, M)``.
    """

    kpts: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    n_occ: int
    P: np.ndarray
    dP: np.ndarray

    def cross(self):
        return cross_mask(self.energies, self.n_occ)


def _spectral_chunk(model, mu, gap_tol):
    def run(kpts):
        H, dH = bloch_batch(model, kpts)
        dH = np.ascontiguousarray(np.moveaxis(dH, 0, 1))
        E, U = eigensystem(H)
        m = occupied_count(E, mu, gap_tol, kpts)
        return H, dH, E, U, m
    return run


def spectral_batch(model, kpts, mu=None, gap_tol=GAP_TOL, workers=None):
    """Eigendata, Fermi projector and its sum-over-states gradient at ``kpts``."""
    mu = model.mu if mu is None else mu
    kpts = np.asarray(kpts, dtype=float).reshape(-1, model.dimension)
    H, dH, E, U, m = map_chunks(_spectral_chunk(model, mu, gap_tol), kpts, workers)
    if np.any(m != m[0]):
        q = int(np.flatnonzero(m != m[0])[0])
        raise GapError(f"occupied rank changes from {m[0]} to {m[q]}", kpts[q])
    n_occ = int(m[0])
    occ = U[..., :n_occ]
    P = occ @ np.conj(np.swapaxes(occ, -1, -2))
    F = cross_mask(E, n_occ)[:, None]
    dP = from_eigenbasis(U[:, None], to_eigenbasis(U[:, None], dH) * F)
    return SpectralBatch(kpts, H, dH, E, U, n_occ, P, dP)


@dataclass(frozen=True)
class GapReport:
    min_gap: float
    min_mu_distance: float
    rank: int
    constant_rank: bool
    k_min_distance: tuple

    def as_dict(self):
        return {"min_gap": self.min_gap, "min_mu_distance": self.min_mu_distance,
                "rank": self.rank, "constant_rank": self.constant_rank}


def gap_report(model, mesh, mu=None):
    """Gap statistics over ``mesh`` without raising."""
    mu = model.mu if mu is None else mu
    kpts = mesh.kpts

    def run(k):
        H, _ = bloch_batch(model, k, with_grad=False)
        return np.linalg.eigvalsh(H)

    E = map_chunks(run, kpts)
    m = (E < mu).sum(axis=1)
    dist = np.abs(E - mu).min(axis=1)
    q = int(np.argmin(dist))
    m0 = int(m[0])
    if 0 < m0 < E.shape[1]:
        gap = float((E[:, m0] - E[:, m0 - 1]).min())
    else:
        gap = float("inf")
    return GapReport(gap, float(dist[q]), m0, bool(np.all(m == m0)), tuple(kpts[q]))


def verify_gap(model, mesh, mu=None, gap_tol=GAP_TOL):
    """Gap report; raises :class:`GapError` if ``mu`` touches a band or the rank varies."""
    rep = gap_report(model, mesh, mu)
    if rep.min_mu_distance <= gap_tol:
        raise GapError(f"spectral gap closed (distance to mu {rep.min_mu_distance:.3e})", rep.k_min_distance)
    if not rep.constant_rank:
        raise GapError("occupied rank is not constant over the mesh")
    return rep


def projector_gradient(model, k, mu=None, axis=1, method="sum_over_states", step=1e-5, gap_tol=GAP_TOL):
    """``d Pi_0 / d k_axis`` at one k (axis is 1-based)."""
    mu = model.mu if mu is None else mu
    k = np.asarray(k, dtype=float).reshape(model.dimension)
    if method == "sum_over_states":
        return spectral_batch(model, k[None], mu, gap_tol, workers=1).dP[0, axis - 1]
    if method == "finite_difference":
        e = np.zeros(model.dimension)
        e[axis - 1] = step
        Pp = spectral_batch(model, (k + e)[None], mu, gap_tol, workers=1).P[0]
        Pm = spectral_batch(model, (k - e)[None], mu, gap_tol, workers=1).P[0]
        return (Pp - Pm) / (2 * step)
    raise ValueError(f"unknown method {method!r}")


__all__ = [
    "BZMesh", "GapError", "GapReport", "SpectralBatch", "SpectralFiber", "cross_mask", "eigensystem",
    "fermi_projector", "gap_report", "projector_gradient", "spectral_batch", "spectral_fiber", "verify_gap",
]
