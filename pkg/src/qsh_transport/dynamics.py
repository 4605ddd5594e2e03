"""Adiabatic switching of a uniform field, solved along characteristics.

With the field ``eps f(eta t)`` along axis ``j`` the fibered Liouville
equation is a transport equation in k.  Along ``k(t) = k0 + eps F(t) e_j``
with ``F' = f`` it reduces to ``i d/dt rho = [H_0(k(t)), rho]`` for every
mesh point separately, starting from the Fermi projector at ``k0``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _accel
from .mesh import map_chunks
from .model import bloch_batch
from .neass import loglog_fit, neass_batch
from .spectral import GAP_TOL, spectral_batch
from .transport import cell_measure

# Exponential switching never vanishes; start where exp(eta t0) is negligible.
EXPONENTIAL_START = 40.0


def _bump(u, sharpness):
    v = 2.0 * u + 1.0
    if abs(v) >= 1.0:
        return 0.0
    return math.exp(-sharpness / (1.0 - v * v))


@dataclass(frozen=True)
class SwitchingProfile:
    """Switching function ``f`` on the scaled time ``s = eta t`` and its time integral ``F``.

    ``smooth_bump``: ``f`` rises from 0 at ``s = -1`` to 1 at ``s = 0`` as the
    normalized integral of a C-infinity bump; ``sharpness`` changes its shape.
    ``exponential``: ``f(s) = exp(s)`` for ``s <= 0``.
    """

    kind: str
    eta: float
    sharpness: float = 1.0
    _norm: float = field(default=1.0, repr=False)

    @property
    def t0(self):
        return -(1.0 if self.kind == "smooth_bump" else EXPONENTIAL_START) / self.eta

    def _moments(self, x):
        if x <= -1.0:
            return 0.0, 0.0
        x = min(x, 0.0)
        i0 = integrate.quad(_bump, -1.0, x, args=(self.sharpness,), epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        i1 = integrate.quad(lambda u: u * _bump(u, self.sharpness), -1.0, x, epsabs=1e-15, epsrel=1e-13,
                            limit=200)[0]
        return i0, i1

    def f(self, s):
        if self.kind == "exponential":
            return math.exp(s) if s <= 0 else 1.0
        if s <= -1.0:
            return 0.0
        if s >= 0.0:
            return 1.0
        return min(1.0, self._moments(s)[0] / self._norm)

    def F(self, t):
        """``int_{t0}^t f(eta u) du``."""
        s = self.eta * t
        if self.kind == "exponential":
            base = math.exp(min(s, 0.0)) - math.exp(self.eta * self.t0)
            return base / self.eta + max(t, 0.0)
        if s <= -1.0:
            return 0.0
        # integration by parts: int_{-1}^x f = x f(x) - int_{-1}^x u f'(u) du
        x = min(s, 0.0)
        i0, i1 = self._moments(x)
        inner = x * i0 / self._norm - i1 / self._norm
        return inner / self.eta + max(t, 0.0)


def switching_profile(kind="smooth_bump", eta=0.1, sharpness=1.0):
    if not eta > 0:
        raise ValueError("eta must be positive")
    if kind not in ("smooth_bump", "exponential"):
        raise ValueError(f"unknown profile {kind!r}")
    prof = SwitchingProfile(kind, float(eta), float(sharpness))
    if kind == "smooth_bump":
        norm = integrate.quad(_bump, -1.0, 0.0, args=(float(sharpness),), epsabs=1e-15, epsrel=1e-13)[0]
        prof = SwitchingProfile(kind, float(eta), float(sharpness), norm)
    return prof


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

def observable_fibers(model, name, kpts, i=1, S="sz"):
    """Fiber stacks of the named periodic observables at ``kpts``."""
    H, dH = bloch_batch(model, kpts)
    if name == "charge_current":
        return dH[i - 1]
    Sm = model.spin_operator(S)
    if name == "spin_current":
        return 0.5 * (dH[i - 1] @ Sm + Sm @ dH[i - 1])
    if name == "spin_torque":
        return 1j * (H @ Sm - Sm @ H)
    raise ValueError(f"unknown observable {name!r}")


@dataclass
class DynamicsResult:
    times: np.ndarray
    values: dict
    neass_distance: np.ndarray
    projector_defect: float
    final_deviation: dict
    n_steps: int


def _step_plan(profile, epsilon, t_grid, j, d, max_step):
    """Step sizes, midpoint k-shifts and the step counts at which to record."""
    t_grid = np.asarray(t_grid, dtype=float)
    t0 = profile.t0
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < t0 - 1e-12:
        raise ValueError("t_grid must be ascending and start at or after the switch-on time")
    steps, shifts, record = [], [], []
    t = t0
    for target in t_grid:
        span = target - t
        n = int(math.ceil(span / max_step - 1e-12)) if span > 0 else 0
        for m in range(n):
            h = span / n
            mid = t + (m + 0.5) * h
            steps.append(h)
            e = np.zeros(d)
            e[j - 1] = epsilon * profile.F(mid)
            shifts.append(e)
        t = target if n else t
        record.append(len(steps))
    if not steps:
        steps, shifts = np.zeros(0), np.zeros((0, d))
    if len(steps) == 0 and np.any(t_grid > t0):
        raise ValueError("step-size underflow")
    return np.asarray(steps, dtype=float), np.asarray(shifts, dtype=float).reshape(-1, d), np.asarray(record)


def spectral_radius(model, mesh):
    H, _ = bloch_batch(model, mesh.kpts, with_grad=False)
    return float(np.abs(np.linalg.eigvalsh(H)).max())


def evolve(model, mesh, epsilon, profile, observables=("charge_current",), t_grid=(0.0,), i=1, j=2, S="sz",
           mu=None, max_step=None, workers=None, neass_reference=True):
    """Integrate every characteristic and record ``tau(A rho(t))`` on ``t_grid``.

    ``max_step`` defaults to ``0.1 / ||H||``; each step applies the exact
    exponential of ``H_0`` frozen at the step midpoint, so the state stays
    a projector to rounding.
    """
    if not 0.0 <= epsilon <= 0.3:
        raise ValueError("epsilon must lie in [0, 0.3]")
    mu = model.mu if mu is None else mu
    d = model.dimension
    norm = spectral_radius(model, mesh)
    h = 0.1 / max(norm, 1e-300) if max_step is None else min(max_step, 0.1 / max(norm, 1e-300))
    steps, shifts, record = _step_plan(profile, epsilon, t_grid, j, d, h)

    kpts = mesh.kpts
    sb = spectral_batch(model, kpts, mu)
    bonds, amps, rows, cols = model.compiled

    def run(k):
        rho0 = spectral_batch(model, k, mu, workers=1).P
        out = _accel.evolve(k, rho0, bonds, amps, rows, cols, model.fiber_dim, shifts, steps, record)
        return np.ascontiguousarray(np.moveaxis(out, 1, 0))

    rho = np.moveaxis(map_chunks(run, kpts, workers), 0, 1)  # (times, K, M, M)

    times = np.asarray(t_grid, dtype=float)
    measure = cell_measure(model)
    values = {name: np.zeros(len(times)) for name in observables}
    dist = np.zeros(len(times))
    defect = 0.0
    final = {}
    for n, t in enumerate(times):
        e = np.zeros(d)
        e[j - 1] = epsilon * profile.F(t)
        kt = kpts + e
        r = rho[n]
        defect = max(defect, float(np.abs(r @ r - r).max()))
        for name in observables:
            A = observable_fibers(model, name, kt, i, S)
            values[name][n] = (np.trace(A @ r, axis1=-2, axis2=-1).sum() / len(kt)).real / measure
        if neass_reference:
            Pe = neass_batch(model, kt, mu, j, epsilon * profile.f(profile.eta * t), GAP_TOL)
            dist[n] = float(np.linalg.norm(r - Pe, ord=2, axis=(-2, -1)).max())
            if t == 0.0:
                for name in observables:
                    A = observable_fibers(model, name, kt, i, S)
                    ref = (np.trace(A @ Pe, axis1=-2, axis2=-1).sum() / len(kt)).real / measure
                    final[name] = abs(values[name][n] - ref)
    del sb
    return DynamicsResult(times, values, dist, defect, final, len(steps))


def neass_value(model, mesh, epsilon, profile, observable, i=1, j=2, S="sz", mu=None):
    """``tau(A Pi_eps)`` with both evaluated at the shifted points ``k0 + eps F(0) e_j``."""
    mu = model.mu if mu is None else mu
    e = np.zeros(model.dimension)
    e[j - 1] = epsilon * profile.F(0.0)
    kt = mesh.kpts + e
    Pe = neass_batch(model, kt, mu, j, epsilon)
    A = observable_fibers(model, observable, kt, i, S)
    return (np.trace(A @ Pe, axis1=-2, axis2=-1).sum() / len(kt)).real / cell_measure(model)


def neass_agreement(model, mesh, eps_list=(0.1, 0.05, 0.025), eta_rule=math.sqrt, observable="charge_current",
                    i=1, j=2, S="sz", kind="smooth_bump", sharpness=1.0, max_step=None, mu=None):
    """Deviation ``|tau(A rho(0)) - tau(A Pi_eps)|`` per epsilon and its log-log slope."""
    devs = []
    for eps in eps_list:
        prof = switching_profile(kind, eta_rule(eps), sharpness)
        res = evolve(model, mesh, eps, prof, (observable,), (0.0,), i, j, S, mu, max_step, neass_reference=False)
        ref = neass_value(model, mesh, eps, prof, observable, i, j, S, mu)
        devs.append(abs(res.values[observable][0] - ref))
    return loglog_fit(eps_list, devs)


def shape_agreement(model, mesh, eps_list=(0.1, 0.05, 0.025), eta_rule=math.sqrt, observable="charge_current",
                    i=1, j=2, S="sz", sharpness=(1.0, 4.0), max_step=None, mu=None):
    """Difference of ``tau(A rho(0))`` between two switching shapes, and its slope."""
    devs = []
    for eps in eps_list:
        vals = []
        for p in sharpness:
            prof = switching_profile("smooth_bump", eta_rule(eps), p)
            res = evolve(model, mesh, eps, prof, (observable,), (0.0,), i, j, S, mu, max_step, neass_reference=False)
            vals.append(res.values[observable][0])
        devs.append(abs(vals[0] - vals[1]))
    return loglog_fit(eps_list, devs)


__all__ = [
    "DynamicsResult", "SwitchingProfile", "evolve", "neass_agreement", "neass_value", "observable_fibers",
    "shape_agreement", "spectral_radius", "switching_profile",
]
