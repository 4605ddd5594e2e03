"""Trace per unit volume, S-conductivities, Chern numbers and identity checks.

Every quantity is a Brillouin-zone average of fiber traces.  For a
periodic operator with fiber ``A(k)`` the trace per unit volume is

    tau(A) = mean_k Tr A(k) / |C_1|

and a position-weighted cell trace ``Tr(chi_1 X_i A chi_1)`` reduces to
``sum_a (r_a)_i T_a`` where ``T_a`` is the k-average of the site-``a``
diagonal block trace of ``A(k)`` (this uses the Zak gauge).

Fiber rules used below, for the field along ``j``:

* ``[X_j, Pi_0]`` has fiber ``D_j = i d_j Pi_0``;
* ``i [H_0, X_i]`` has fiber ``d_i H``;
* ``Pi_1 = I(D_j)``.

Chern numbers use the orientation ``Chern_ij = (i / 2 pi) int Tr(Pi [d_j Pi, d_i Pi])``
which makes ``sigma_conv(S = Id) = Chern / 2 pi`` hold with a plus sign.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import BZMesh
from .model import bloch_batch, shifted_model, site_local
from .neass import pi1_and_generator
from .spectral import GAP_TOL, GapError, cross_mask, eigensystem, from_eigenbasis, spectral_batch, to_eigenbasis

NORMALIZATIONS = ("geometric", "counting")


def _dag(A):
    return np.conj(np.swapaxes(A, -1, -2))


def _comm(A, B):
    return A @ B - B @ A


def cell_measure(model, normalization="geometric"):
    """``|C_1|``: geometric cell volume, or the number of sites per cell."""
    if normalization == "geometric":
        return model.lattice.cell_volume
    if normalization == "counting":
        return float(model.n_sites)
    raise ValueError(f"unknown normalization {normalization!r}; choose from {NORMALIZATIONS}")


def mean_trace(fibers):
    """k-average of the fiber traces, summed in index order."""
    tr = np.trace(fibers, axis1=-2, axis2=-1)
    return complex(np.sum(tr) / tr.shape[0])


def tau_fibers(model, fibers, normalization="geometric"):
    return mean_trace(fibers) / cell_measure(model, normalization)


def tau_periodic(model, mesh, fiber_fn, normalization="geometric"):
    """Trace per unit volume of the periodic operator with fiber ``fiber_fn(k)``."""
    fibers = np.array([fiber_fn(k) for k in mesh.kpts], dtype=complex)
    return tau_fibers(model, fibers, normalization)


def site_block_traces(model, fibers):
    """k-averaged trace of every site block, shape ``(n_sites,)``."""
    diag = np.diagonal(fibers, axis1=-2, axis2=-1)
    per_index = np.sum(diag, axis=0) / diag.shape[0]
    return np.array([per_index[model.offsets[a]:model.offsets[a + 1]].sum() for a in range(model.n_sites)])


# ---------------------------------------------------------------------------
# Fiber data for one (model, mesh, mu, i, j, S)
# ---------------------------------------------------------------------------

class TransportFibers:
    """Operator stacks entering the conductivity formulas (lazily built)."""

    def __init__(self, model, mesh, mu=None, i=1, j=2, S="sz", gap_tol=GAP_TOL, workers=None,
                 normalization="geometric"):
        d = model.dimension
        if not (1 <= i <= d and 1 <= j <= d):
            raise ValueError(f"axes must lie in 1..{d}, got i={i}, j={j}")
        self.model = model
        self.mesh = mesh
        self.mu = model.mu if mu is None else float(mu)
        self.i, self.j = i, j
        self.normalization = normalization
        self.S = model.spin_operator(S) if not isinstance(S, np.ndarray) or S.shape[0] != model.fiber_dim else S
        self.sb = spectral_batch(model, mesh.kpts, self.mu, gap_tol, workers)
        sb = self.sb
        self.H, self.P = sb.H, sb.P
        self.dHi = sb.dH[:, i - 1]
        self.Di = 1j * sb.dP[:, i - 1]
        self.Dj = 1j * sb.dP[:, j - 1]
        self.Pi1, self.gen = pi1_and_generator(sb.energies, sb.vectors, sb.n_occ, sb.dP[:, j - 1])
        self.measure = cell_measure(model, normalization)

    def tau(self, fibers):
        return mean_trace(fibers) / self.measure

    # building blocks ------------------------------------------------------
    def S_od(self):
        Q = np.eye(self.model.fiber_dim) - self.P
        return self.P @ self.S @ Q + Q @ self.S @ self.P

    def Xi_od(self):
        return _comm(self.Di, self.P)

    def HXi_d(self):
        return -1j * self.dHi - _comm(self.H, self.Xi_od())

    def J_conv(self):
        return 0.5 * (self.dHi @ self.S + self.S @ self.dHi)

    # the operators of the general conductivity formula ------------------------
    def C(self):
        return 1j * self.P @ _comm(self.Di @ self.S, self.Dj)

    def E1(self, off_diagonal_spin=False):
        S = self.S_od() if off_diagonal_spin else self.S
        return 1j * self.HXi_d() @ S @ self.Pi1

    def E2(self):
        return 1j * _comm(self.H, self.Xi_od() @ self.S @ self.Pi1)

    def E3(self):
        return 1j * self.Xi_od() @ _comm(self.S, self.H) @ self.Pi1

    def E4(self):
        return 1j * _comm(self.Di, self.P @ self.S @ (-self.Dj))

    def R(self):
        return 1j * _comm(self.H, self.S) @ self.Pi1


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ConvReport:
    sigma: float
    chern_like: complex
    extra: complex
    direct: complex
    residual: float


def sigma_conv(model, mesh, i=1, j=2, S="sz", mu=None, fibers=None, normalization="geometric"):
    """Conventional S-conductivity with its two summands.

    ``extra`` is ``tau(i [H, X_i^D] S^OD Pi_1 + i X_i^OD [S, H] Pi_1)``; the
    residual compares the sum with the defining ``Re tau(J_conv Pi_1)``.
    """
    if i == j:
        raise ValueError("sigma_conv needs i != j (transverse response)")
    f = fibers or TransportFibers(model, mesh, mu, i, j, S, normalization=normalization)
    c = f.tau(f.C())
    extra = f.tau(f.E1(off_diagonal_spin=True) + f.E3())
    direct = f.tau(f.J_conv() @ f.Pi1)
    total = c + extra
    return ConvReport(total.real, c, extra, direct, abs(total.real - direct.real))


def per_orbital_torque(model, mesh, j=2, S="sz", mu=None, fibers=None):
    """``T_a``: k-averaged site-block trace of ``i [H_0, S] Pi_1``."""
    f = fibers or TransportFibers(model, mesh, mu, 1, j, S)
    return site_block_traces(model, f.R())


def rotation_term(model, torque, i, measure):
    return complex(np.sum(model.positions[:, i - 1] * torque) / measure)


def sigma_rot(model, mesh, i=1, j=2, S="sz", mu=None, fibers=None, origin_shift=0.37, normalization="geometric"):
    """Rotation part ``Re sum_a (r_a)_i T_a / |C_1|`` and the origin-shift defect.

    The shift check moves every orbital by ``origin_shift`` along axis ``i``
    and recomputes from scratch.
    """
    f = fibers or TransportFibers(model, mesh, mu, i, j, S, normalization=normalization)
    T = site_block_traces(model, f.R())
    value = rotation_term(model, T, i, f.measure)
    shift = np.zeros(model.dimension)
    shift[i - 1] = origin_shift
    moved = model.with_positions(model.positions + shift, model.hoppings)
    g = TransportFibers(moved, mesh, f.mu, i, j, f.S, normalization=normalization)
    moved_value = rotation_term(moved, site_block_traces(moved, g.R()), i, g.measure)
    return value.real, abs(moved_value.real - value.real), T


def persistent_current(model, mesh, i=1, S="sz", mu=None, fibers=None, normalization="geometric"):
    """``tau(J_conv,i Pi_0)`` (complex; the physical value is its real part)."""
    f = fibers or TransportFibers(model, mesh, mu, i, i, S, normalization=normalization)
    return f.tau(f.J_conv() @ f.P)


def extra_terms(model, mesh, i=1, j=2, S="sz", mu=None, fibers=None, normalization="geometric"):
    f = fibers or TransportFibers(model, mesh, mu, i, j, S, normalization=normalization)
    return {
        "C": f.tau(f.C()),
        "E1": f.tau(f.E1()),
        "E2": f.tau(f.E2()),
        "E3": f.tau(f.E3()),
        "E4": f.tau(f.E4()),
        "R": f.tau(f.R()),
    }


def kubo_sigma(model, mesh, i=1, j=2, eta_list=(1e-1, 1e-2, 1e-3), S="sz", mu=None, fibers=None,
               normalization="geometric"):
    """Adiabatically switched response ``Re tau(J_conv rho_1(eta))`` for each eta.

    With switching ``exp(eta t)`` the first-order state has eigenbasis
    elements ``rho_1[m, n] = D_j[m, n] / (E_m - E_n - i eta)``.
    """
    if min(eta_list) <= 0:
        raise ValueError("eta must be positive")
    f = fibers or TransportFibers(model, mesh, mu, i, j, S, normalization=normalization)
    U, E = f.sb.vectors, f.sb.energies
    D = to_eigenbasis(U, f.Dj)
    A = to_eigenbasis(U, f.J_conv())
    dE = E[:, :, None] - E[:, None, :]
    out = []
    for eta in eta_list:
        rho1 = D / (dE - 1j * eta)
        out.append(f.tau(A @ rho1).real)
    return out


# ---------------------------------------------------------------------------
# Chern numbers
# ---------------------------------------------------------------------------

def occupied_projectors(model, kpts, mu, spin_block=None, gap_tol=GAP_TOL, with_grad=True):
    """Fermi projector (and gradient) of ``H`` or of one spin block of ``sum_l p_l H p_l``.

    ``spin_block`` is an internal projector ``p_l``; the result is then
    ``Pi~_0 (Id (x) p_l)`` built from the spin-diagonal part of ``H``.
    """
    if spin_block is None:
        sb = spectral_batch(model, kpts, mu, gap_tol)
        return sb.P, (sb.dP if with_grad else None)
    H, dH = bloch_batch(model, kpts, with_grad)
    p_full = [site_local(model, p) for _, p in model.spin.spectral()]
    Ht = sum(p @ H @ p for p in p_full)
    E, U = eigensystem(Ht)
    dist = np.abs(E - mu).min(axis=-1)
    m = (E < mu).sum(axis=-1)
    if np.any(dist <= gap_tol) or np.any(m != m[0]):
        q = int(np.argmin(dist)) if np.any(dist <= gap_tol) else int(np.flatnonzero(m != m[0])[0])
        raise GapError("spin-diagonal Hamiltonian is gapless at mu; spin-Chern number undefined", kpts[q])
    n_occ = int(m[0])
    occ = U[..., :n_occ]
    Pt = occ @ _dag(occ)
    pb = site_local(model, spin_block)
    if not with_grad:
        return Pt @ pb, None
    dHt = sum(p @ np.moveaxis(dH, 0, 1) @ p for p in p_full)
    F = cross_mask(E, n_occ)[:, None]
    dPt = from_eigenbasis(U[:, None], to_eigenbasis(U[:, None], dHt) * F)
    return Pt @ pb, dPt @ pb


def _frames(P):
    """Orthonormal frames spanning the ranges of a stack of projectors."""
    w, v = np.linalg.eigh(P)
    rank = int(round(float(np.trace(P[0]).real)))
    return v[..., P.shape[-1] - rank:]


def fhs_chern(model, mesh, P):
    """Fukui-Hatsugai-Suzuki lattice Chern number of a projector stack on ``mesh``.

    Plaquettes are traversed counterclockwise in the Cartesian ``(k_1, k_2)``
    plane and the flux is the argument of the link product; this equals
    ``(i/2pi) int Tr(P [d_2 P, d_1 P])``.  Links across the zone boundary use
    ``u(k + b) = D(b) u(k)``.
    """
    n1, n2 = mesh.sizes
    u = _frames(P).reshape(n1, n2, P.shape[-1], -1)
    if u.shape[-1] == 0:
        return 0.0
    b1, b2 = mesh.reciprocal
    D1 = np.exp(-1j * model.index_positions @ b1)[:, None]
    D2 = np.exp(-1j * model.index_positions @ b2)[:, None]
    u1 = np.roll(u, -1, axis=0)
    u1[-1] = D1 * u1[-1]
    u2 = np.roll(u, -1, axis=1)
    u2[:, -1] = D2 * u2[:, -1]

    def link(a, b):
        z = np.linalg.det(_dag(a) @ b)
        return z / np.abs(z)

    L1 = link(u, u1)                    # U_1(k)
    L2 = link(u, u2)                    # U_2(k)
    L1_up = np.roll(L1, -1, axis=1)     # U_1(k + e_2)
    L2_right = np.roll(L2, -1, axis=0)  # U_2(k + e_1)
    F = np.angle(L1 * L2_right / (L1_up * L2))
    # the (b_1, b_2) frame may be left-handed
    return float(F.sum() / (2 * np.pi)) * np.sign(np.linalg.det(mesh.reciprocal))


def integral_chern(model, P, dP, i=1, j=2):
    """``(i/2pi) int Tr(P [d_j P, d_i P]) dk`` as a mesh average; complex."""
    bz = abs(np.linalg.det(model.lattice.reciprocal))
    curv = np.trace(P @ _comm(dP[:, j - 1], dP[:, i - 1]), axis1=-2, axis2=-1)
    return 1j * bz / (2 * np.pi) * complex(np.sum(curv) / curv.shape[0])


@dataclass
class ChernResult:
    value: float
    imag_residual: float = 0.0
    method: str = "fhs"


def chern_number(model, mesh, projector_fn=None, method="fhs", i=1, j=2, mu=None):
    """Chern number ``(i/2pi) int Tr(Pi [d_j Pi, d_i Pi])`` of a projector family.

    ``projector_fn(kpts)`` returns ``(P, dP)`` stacks; by default the Fermi
    projector of ``model``.  ``fhs`` gives an exact integer (as float);
    ``integral`` a mesh quadrature with its imaginary residual.
    """
    if model.dimension != 2:
        raise ValueError("Chern numbers are defined here for d = 2")
    if {i, j} != {1, 2}:
        raise ValueError("need (i, j) = (1, 2) or (2, 1)")
    mu = model.mu if mu is None else mu
    orient = 1.0 if (i, j) == (1, 2) else -1.0
    fn = projector_fn or (lambda k: occupied_projectors(model, k, mu, with_grad=(method == "integral")))
    P, dP = fn(mesh.kpts)
    if method == "fhs":
        c = fhs_chern(model, mesh, P)
        return ChernResult(orient * float(round(c)) + 0.0, abs(c - round(c)), "fhs")
    if method == "integral":
        if dP is None:
            raise ValueError("integral method needs projector gradients")
        c = integral_chern(model, P, dP, i, j)
        return ChernResult(c.real, abs(c.imag), "integral")
    raise ValueError(f"unknown method {method!r}")


@dataclass
class SpinChernResult:
    value: float
    blocks: list
    spins: list


def spin_chern(model, mesh, mu=None, i=1, j=2, method="fhs"):
    """``sum_l s_l Chern(Pi~_0 p_l)`` with ``Pi~_0`` from ``sum_l p_l H p_l``."""
    if model.spin is None:
        raise ValueError("model declares no spin matrix")
    mu = model.mu if mu is None else mu
    blocks, spins = [], []
    for s_l, p_l in model.spin.spectral():
        fn = (lambda k, p=p_l: occupied_projectors(model, k, mu, spin_block=p, with_grad=(method == "integral")))
        blocks.append(chern_number(model, mesh, fn, method, i, j, mu).value)
        spins.append(s_l)
    return SpinChernResult(float(sum(s * c for s, c in zip(spins, blocks))), blocks, spins)


# ---------------------------------------------------------------------------
# Identity checks
# ---------------------------------------------------------------------------

def btorque_check(model, mesh, B, j=2, mu=None, constant=None, fibers=None, tol=1e-10):
    """Both sides of ``tau(i[H,B]Pi_1) = tau(i Pi_0 [[B, Pi_0], [X_j, Pi_0]])``.

    ``B`` is a fixed fiber matrix (k-independent) or a callable on k stacks.
    Returns ``(lhs, rhs, vanishing)``.  ``vanishing`` tests ``lhs ~ 0``, which
    needs ``[B, X_j] = 0``: ``B`` k-independent and coupling only orbitals at
    the same position.  It is ``None`` when that does not hold.
    """
    f = fibers or TransportFibers(model, mesh, mu, 1, j, "id")
    if callable(B):
        Bk = np.asarray(B(mesh.kpts), dtype=complex)
        constant = False if constant is None else constant
    else:
        B = np.asarray(B, dtype=complex)
        Bk = np.broadcast_to(B, f.H.shape)
        if constant is None:
            pos = model.index_positions
            same = np.all(np.abs(pos[:, None, :] - pos[None, :, :]) < 1e-12, axis=-1)
            constant = bool(np.all(np.abs(B[~same]) == 0.0))
    lhs = f.tau(1j * _comm(f.H, Bk) @ f.Pi1)
    rhs = f.tau(1j * f.P @ _comm(_comm(Bk, f.P), f.Dj))
    return lhs, rhs, (abs(lhs) <= tol) if constant else None


@dataclass
class TransportReport:
    sigma_conv: float
    sigma_rot: float
    sigma_prop: float
    chern: float
    s_chern: float
    tau_R: complex
    torque: list
    extra_terms: dict
    persistent_current: float
    kubo: list
    mesh: dict
    normalization: str
    residuals: dict = field(default_factory=dict)


def sigma_prop(model, mesh, i=1, j=2, S="sz", mu=None, eta_list=(1e-1, 1e-2, 1e-3), workers=None,
               normalization="geometric", with_topology=True):
    """Full transport report for the response along ``i`` to a field along ``j``."""
    f = TransportFibers(model, mesh, mu, i, j, S, workers=workers, normalization=normalization)
    conv = sigma_conv(model, mesh, i, j, fibers=f)
    rot, shift_defect, T = sigma_rot(model, mesh, i, j, fibers=f, normalization=normalization)
    terms = extra_terms(model, mesh, i, j, fibers=f)
    # second split: periodic part + X_i^D-weighted part
    periodic = f.tau(f.C() + f.E1(off_diagonal_spin=True))
    xd_weighted = rotation_term(model, T, i, f.measure) - f.tau(f.Xi_od() @ f.R())
    split2 = (periodic + xd_weighted).real
    prop = conv.sigma + rot
    pc = persistent_current(model, mesh, i, fibers=f)
    kubo = kubo_sigma(model, mesh, i, j, eta_list, fibers=f) if eta_list else []

    chern = s_chern = float("nan")
    if with_topology and model.dimension == 2:
        chern = chern_number(model, mesh, mu=f.mu, i=i, j=j).value
        if model.spin is not None:
            try:
                s_chern = spin_chern(model, mesh, f.mu, i, j).value
            except GapError:
                s_chern = float("nan")

    recon = (terms["C"] + terms["E1"] + terms["E3"]).real
    residuals = {
        "conv_theorem_vs_direct": conv.residual,
        "conv_reconstruction": abs(recon - conv.sigma),
        "split_difference": abs(split2 - prop),
        "origin_shift": shift_defect,
        "sum_torque": abs(complex(np.sum(T))),
        "imag_sigma_conv": abs((conv.chern_like + conv.extra).imag),
        "imag_sigma_rot": abs(rotation_term(model, T, i, f.measure).imag),
        "imag_persistent_current": abs(pc.imag),
        "sylvester": float(np.abs(_comm(f.H, f.Pi1) - f.Dj).max()),
    }
    return TransportReport(
        sigma_conv=conv.sigma, sigma_rot=rot, sigma_prop=prop, chern=chern, s_chern=s_chern,
        tau_R=terms["R"], torque=[complex(t) for t in T], extra_terms=terms, persistent_current=pc.real,
        kubo=[{"eta": float(e), "sigma": float(v)} for e, v in zip(eta_list or [], kubo)],
        mesh=mesh.metadata(), normalization=normalization, residuals=residuals)


# ---------------------------------------------------------------------------
# Unit-cell consistency and robustness
# ---------------------------------------------------------------------------

@dataclass
class UCCReport:
    delta_conv: float
    delta_rot: float
    predicted_delta_rot: float
    violation: float
    base: tuple
    shifted: tuple


def ucc_check(model, mesh, cell_shift, i=1, j=2, S="sz", mu=None):
    """Recompute ``sigma_conv`` and ``sigma_rot`` after moving orbital representatives.

    ``predicted_delta_rot`` is ``sum_a (R gamma_a)_i T_a / |C_1|`` from the
    unshifted torques.
    """
    moved = shifted_model(model, cell_shift)
    f0 = TransportFibers(model, mesh, mu, i, j, S)
    f1 = TransportFibers(moved, mesh, mu, i, j, S)
    c0, c1 = sigma_conv(model, mesh, i, j, fibers=f0).sigma, sigma_conv(moved, mesh, i, j, fibers=f1).sigma
    T0 = site_block_traces(model, f0.R())
    T1 = site_block_traces(moved, f1.R())
    r0 = rotation_term(model, T0, i, f0.measure).real
    r1 = rotation_term(moved, T1, i, f1.measure).real
    disp = np.asarray(cell_shift, dtype=float) @ model.lattice.vectors
    predicted = float(np.sum(disp[:, i - 1] * T0).real / f0.measure)
    return UCCReport(abs(c1 - c0), r1 - r0, predicted, abs(predicted), (c0, r0), (c1, r1))


@dataclass
class RobustnessTable:
    rows: list
    slope: float
    intercept: float
    bound_constant: float
    diagnostic: str = ""


def robustness_sweep(model_family, mesh, lambda_list, i=1, j=2, S="sz"):
    """Deviation ``|2 pi sigma_prop - S-Chern|`` along a one-parameter family."""
    rows = []
    diag = ""
    for lam in lambda_list:
        model = model_family(lam)
        try:
            rep = sigma_prop(model, mesh, i, j, S, eta_list=(), with_topology=False)
            sc = spin_chern(model, mesh, model.mu, i, j).value
        except GapError as exc:
            diag = f"gap closed at lambda = {lam}: {exc}"
            break
        rows.append({"lambda": float(lam), "sigma_prop": rep.sigma_prop, "s_chern": sc,
                     "deviation": abs(2 * math.pi * rep.sigma_prop - sc)})
    lam = np.array([r["lambda"] for r in rows])
    dev = np.array([r["deviation"] for r in rows])
    if len(rows) >= 2:
        slope, icpt = np.polyfit(lam, dev, 1)
        pos = lam > 0
        bound = float(np.max(dev[pos] / lam[pos])) if np.any(pos) else float("nan")
    else:
        slope = icpt = bound = float("nan")
    return RobustnessTable(rows, float(slope), float(icpt), bound, diag)


__all__ = [
    "BZMesh", "ChernResult", "ConvReport", "RobustnessTable", "SpinChernResult", "TransportFibers",
    "TransportReport", "UCCReport", "btorque_check", "cell_measure", "chern_number", "extra_terms",
    "fhs_chern", "integral_chern", "kubo_sigma", "per_orbital_torque", "persistent_current", "robustness_sweep",
    "sigma_conv", "sigma_prop", "sigma_rot", "spin_chern", "tau_fibers", "tau_periodic", "ucc_check",
]
