"""Independent reference computations used by the tests.

Nothing here calls the package's spectral, neass or transport code: each
oracle builds its objects from the raw hopping list or from closed forms.
"""

import itertools
import math

import numpy as np
import scipy.linalg
import scipy.stats

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def sylvester_2x2(d0, d, A):
    """Off-diagonal solution of ``[H, X] = A^OD`` for ``H = d0 + d.sigma`` in closed form.

    Off-diagonal ``X`` anticommutes with ``n.sigma``, so ``[H, X] = 2 (d.sigma) X``.
    """
    ds = sum(c * s for c, s in zip(d, PAULI))
    n2 = float(np.dot(d, d))
    nsig = ds / np.sqrt(n2)
    a_od = 0.5 * (A - nsig @ A @ nsig)
    return ds @ a_od / (2.0 * n2)


def sylvester_blocks(H, P, A):
    """Off-diagonal ``X`` with ``[H, X] = A^OD`` by two dense block Sylvester solves.

    Uses arbitrary orthonormal bases of ``ran P`` and ``ran (1 - P)`` (not the
    eigenbasis), so ``H`` restricted to each block is a dense matrix, and
    solves each block equation as a Kronecker-product linear system.
    """
    w, v = np.linalg.eigh(P)
    rng = np.random.default_rng(0)
    # mix each block with a random unitary so the bases are not eigenvectors of H
    Vp = v[:, w > 0.5] @ _random_unitary(int((w > 0.5).sum()), rng)
    Vq = v[:, w <= 0.5] @ _random_unitary(int((w <= 0.5).sum()), rng)
    Hp, Hq = Vp.conj().T @ H @ Vp, Vq.conj().T @ H @ Vq
    Xpq = _kron_sylvester(Hp, Hq, Vp.conj().T @ A @ Vq)
    Xqp = _kron_sylvester(Hq, Hp, Vq.conj().T @ A @ Vp)
    return Vp @ Xpq @ Vq.conj().T + Vq @ Xqp @ Vp.conj().T


def _random_unitary(n, rng):
    if n == 1:
        return np.exp(2j * np.pi * rng.uniform()) * np.ones((1, 1))
    return scipy.stats.unitary_group.rvs(n, random_state=rng)


def _kron_sylvester(Ha, Hb, C):
    """``X`` with ``Ha X - X Hb = C`` via ``(I (x) Ha - Hb^T (x) I) vec X = vec C`` (column-major vec)."""
    m, n = C.shape
    L = np.kron(np.eye(n), Ha) - np.kron(Hb.T, np.eye(m))
    x = np.linalg.solve(L, C.reshape(-1, order="F"))
    return x.reshape((m, n), order="F")


# ---------------------------------------------------------------------------
# Discrete tori
# ---------------------------------------------------------------------------

class Torus:
    """Finite torus of ``L^d`` cells built directly from a model's hopping list."""

    def __init__(self, model, L):
        self.model = model
        self.L = L
        self.d = model.dimension
        self.cells = list(itertools.product(range(L), repeat=self.d))
        self.cell_index = {c: n for n, c in enumerate(self.cells)}
        self.M = model.fiber_dim
        self.N = len(self.cells) * self.M
        self.A = model.lattice.vectors
        self.offsets = model.offsets

    def index(self, cell, site, alpha=0):
        cell = tuple(int(c) % self.L for c in cell)
        return self.cell_index[cell] * self.M + self.offsets[site] + alpha

    def displacement(self, site_a, site_b, gamma):
        pos = self.model.positions
        return np.asarray(gamma, dtype=float) @ self.A + pos[site_b] - pos[site_a]

    def hamiltonian(self, vector_potential=None):
        """Real-space matrix; an optional constant vector potential enters as Peierls phases."""
        Avec = np.zeros(self.d) if vector_potential is None else np.asarray(vector_potential, dtype=float)
        H = np.zeros((self.N, self.N), dtype=complex)
        for term in self.model.hoppings:
            a, b = term.source, term.target
            gamma = np.asarray(term.offset, dtype=int)
            block = np.asarray(term.amplitude, dtype=complex)
            phase = np.exp(1j * Avec @ self.displacement(a, b, gamma))
            for cell in self.cells:
                r0 = self.index(cell, a)
                c0 = self.index(np.asarray(cell) + gamma, b)
                H[r0:r0 + block.shape[0], c0:c0 + block.shape[1]] += phase * block
        return H

    def current(self, axis, vector_potential=None):
        """``dH / dA_axis`` of the Peierls Hamiltonian."""
        Avec = np.zeros(self.d) if vector_potential is None else np.asarray(vector_potential, dtype=float)
        J = np.zeros((self.N, self.N), dtype=complex)
        for term in self.model.hoppings:
            a, b = term.source, term.target
            gamma = np.asarray(term.offset, dtype=int)
            block = np.asarray(term.amplitude, dtype=complex)
            disp = self.displacement(a, b, gamma)
            factor = 1j * disp[axis - 1] * np.exp(1j * Avec @ disp)
            for cell in self.cells:
                r0 = self.index(cell, a)
                c0 = self.index(np.asarray(cell) + gamma, b)
                J[r0:r0 + block.shape[0], c0:c0 + block.shape[1]] += factor * block
        return J

    def site_local(self, fiber_matrix):
        """Real-space copy of a k-independent fiber matrix."""
        return np.kron(np.eye(len(self.cells)), np.asarray(fiber_matrix, dtype=complex))

    def kpoints(self):
        frac = np.array(self.cells, dtype=float) / self.L
        return frac @ self.model.lattice.reciprocal

    def from_fibers(self, kpts, fibers):
        """Real-space kernel ``K(R a, R' b) = (1/N) sum_k K(k)_ab exp(-i k.(R' + r_b - R - r_a))``."""
        pos = self.model.index_positions
        R = np.array(self.cells, dtype=float) @ self.A
        full_pos = (R[:, None, :] + pos[None, :, :]).reshape(-1, self.d)
        K = np.zeros((self.N, self.N), dtype=complex)
        for k, F in zip(kpts, fibers):
            ph = np.exp(1j * full_pos @ k)
            tiled = np.tile(F, (len(self.cells), len(self.cells)))
            K += ph[:, None] * tiled * np.conj(ph)[None, :]
        return K / len(kpts)

    def fermi_projector(self, mu, vector_potential=None):
        E, U = np.linalg.eigh(self.hamiltonian(vector_potential))
        occ = U[:, E < mu]
        return occ @ occ.conj().T


def torus_torque(model, L, Pi1_fibers, kpts, S):
    """Per-site kernel diagonals of ``i[H, S] Pi_1`` from explicit torus matrices."""
    tor = Torus(model, L)
    H = tor.hamiltonian()
    Sr = tor.site_local(S)
    Pi1 = tor.from_fibers(kpts, Pi1_fibers)
    R = 1j * (H @ Sr - Sr @ H) @ Pi1
    out = []
    for a, o in enumerate(model.orbitals):
        vals = [R[tor.index(cell, a) + al, tor.index(cell, a) + al] for cell in tor.cells
                for al in range(o.internal_dim)]
        out.append(complex(np.sum(vals)) / len(tor.cells))
    return np.array(out), tor


def torus_dynamics(model, L, mu, epsilon, profile, t_grid, max_step, axis=1):
    """Real-space evolution of the torus Fermi projector under a Peierls-phase field.

    Reproduces the step plan of the fiberwise scheme (equal substeps between
    grid times, propagator of the Hamiltonian frozen at each midpoint) but
    propagates the full torus density matrix with ``scipy.linalg.expm``.
    """
    tor = Torus(model, L)
    rho = tor.fermi_projector(mu)
    t = profile.t0
    values = []
    for target in t_grid:
        span = target - t
        n = int(math.ceil(span / max_step - 1e-12)) if span > 0 else 0
        for m in range(n):
            h = span / n
            mid = t + (m + 0.5) * h
            A = np.zeros(tor.d)
            A[axis - 1] = epsilon * profile.F(mid)
            U = scipy.linalg.expm(-1j * h * tor.hamiltonian(A))
            rho = U @ rho @ U.conj().T
        t = target if n else t
        A = np.zeros(tor.d)
        A[axis - 1] = epsilon * profile.F(target)
        J = tor.current(axis, A)
        values.append(float(np.trace(J @ rho).real) / (len(tor.cells) * model.lattice.cell_volume))
    return np.array(values)
