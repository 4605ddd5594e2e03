"""Hot kernels with a numba implementation and a pure-numpy fallback.

The backend is picked once at import time.  Set ``QSH_BACKEND=numpy`` to
force the fallback (useful for debugging and for the benchmark script);
the default is ``numba`` whenever it imports.

Both backends produce the same values up to rounding, but they are not
bitwise identical to each other.  Within one backend every k-point is
processed independently, so chunking the mesh never changes a result.
"""

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _selected_backend():
    requested = os.environ.get("QSH_BACKEND", "").strip().lower()
    if requested == "numpy" or not HAS_NUMBA:
        return "numpy"
    return "numba"


BACKEND = _selected_backend()


# ---------------------------------------------------------------------------
# Bloch assembly
# ---------------------------------------------------------------------------

def assemble_bloch_numpy(kpts, bonds, amps, rows, cols, dim, with_grad=True):
    """Sum ``amps * exp(i k.bond)`` into ``H[k, row, col]``.

    Terms are added one at a time in list order so the floating-point
    summation order is fixed and independent of the number of k-points.
    """
    kpts = np.ascontiguousarray(kpts, dtype=np.float64)
    nk, d = kpts.shape
    H = np.zeros((nk, dim, dim), dtype=np.complex128)
    dH = np.zeros((d, nk, dim, dim), dtype=np.complex128) if with_grad else None
    if len(amps) == 0:
        return H, dH
    coef = np.exp(1j * (kpts @ bonds.T)) * amps
    for t in range(len(amps)):
        r, c = rows[t], cols[t]
        H[:, r, c] += coef[:, t]
        if with_grad:
            for i in range(d):
                dH[i, :, r, c] += (1j * bonds[t, i]) * coef[:, t]
    return H, dH


if HAS_NUMBA:

    @numba.njit(cache=True)
    def _assemble_bloch_nb(kpts, bonds, amps, rows, cols, dim, with_grad):
        nk, d = kpts.shape
        nt = amps.shape[0]
        H = np.zeros((nk, dim, dim), dtype=np.complex128)
        ng = d if with_grad else 0
        dH = np.zeros((ng, nk, dim, dim), dtype=np.complex128)
        for q in range(nk):
            for t in range(nt):
                ph = 0.0
                for i in range(d):
                    ph += kpts[q, i] * bonds[t, i]
                c = np.exp(1j * ph) * amps[t]
                H[q, rows[t], cols[t]] += c
                for i in range(ng):
                    dH[i, q, rows[t], cols[t]] += (1j * bonds[t, i]) * c
        return H, dH

    @numba.njit(cache=True)
    def _evolve_nb(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record):
        nk = kpts.shape[0]
        d = kpts.shape[1]
        nt = amps.shape[0]
        nrec = record.shape[0]
        out = np.zeros((nrec, nk, dim, dim), dtype=np.complex128)
        H = np.zeros((dim, dim), dtype=np.complex128)
        for q in range(nk):
            rho = rho0[q].copy()
            r = 0
            while r < nrec and record[r] == 0:
                out[r, q] = rho
                r += 1
            for s in range(steps.shape[0]):
                H[:, :] = 0.0
                for t in range(nt):
                    ph = 0.0
                    for i in range(d):
                        ph += (kpts[q, i] + shifts[s, i]) * bonds[t, i]
                    H[rows[t], cols[t]] += np.exp(1j * ph) * amps[t]
                w, v = np.linalg.eigh(H)
                U = (v * np.exp(-1j * steps[s] * w)) @ v.conj().T
                rho = U @ rho @ U.conj().T
                while r < nrec and record[r] == s + 1:
                    out[r, q] = rho
                    r += 1
        return out


def assemble_bloch(kpts, bonds, amps, rows, cols, dim, with_grad=True, backend=None):
    """Zak-gauge Bloch matrices and their analytic k-gradients.

    Returns ``H`` with shape ``(K, dim, dim)`` and ``dH`` with shape
    ``(d, K, dim, dim)`` (``None`` when ``with_grad`` is false).
    """
    backend = backend or BACKEND
    kpts = np.ascontiguousarray(np.atleast_2d(kpts), dtype=np.float64)
    if backend == "numba":
        H, dH = _assemble_bloch_nb(kpts, bonds, amps, rows, cols, dim, with_grad)
        return H, (dH if with_grad else None)
    return assemble_bloch_numpy(kpts, bonds, amps, rows, cols, dim, with_grad)


# ---------------------------------------------------------------------------
# Propagation along characteristics
# ---------------------------------------------------------------------------

def evolve_numpy(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record):
    rho = np.array(rho0, dtype=np.complex128)
    out = np.zeros((len(record), len(kpts), dim, dim), dtype=np.complex128)
    r = 0
    while r < len(record) and record[r] == 0:
        out[r] = rho
        r += 1
    for s in range(len(steps)):
        H, _ = assemble_bloch_numpy(kpts + shifts[s], bonds, amps, rows, cols, dim, False)
        w, v = np.linalg.eigh(H)
        U = (v * np.exp(-1j * steps[s] * w)[:, None, :]) @ v.conj().transpose(0, 2, 1)
        rho = U @ rho @ U.conj().transpose(0, 2, 1)
        while r < len(record) and record[r] == s + 1:
            out[r] = rho
            r += 1
    return out


def evolve(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record, backend=None):
    """Propagate ``rho0[q]`` under ``H(kpts[q] + shifts[s])`` for ``steps[s]``.

    Each step applies the exact exponential of the frozen Hamiltonian.
    ``record`` lists (ascending) step counts after which the state is
    stored; ``0`` stores the initial state.
    """
    backend = backend or BACKEND
    kpts = np.ascontiguousarray(kpts, dtype=np.float64)
    shifts = np.ascontiguousarray(shifts, dtype=np.float64)
    steps = np.ascontiguousarray(steps, dtype=np.float64)
    record = np.ascontiguousarray(record, dtype=np.int64)
    rho0 = np.ascontiguousarray(rho0, dtype=np.complex128)
    if backend == "numba":
        return _evolve_nb(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record)
    return evolve_numpy(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record)
