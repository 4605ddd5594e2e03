"""Periodic tight-binding models and their Zak-gauge Bloch fibers.

A model lives on ``Gamma + {r_a}``: lattice vectors ``a_1..a_d`` (rows of
``LatticeSpec.vectors``), orbital sites at Cartesian positions ``r_a``,
each carrying ``N_a`` internal slots.  Hopping blocks are stored as
``t_ab(gamma) = <a, 0| H |b, gamma>`` and the Bloch matrix is

    H(k)[(a, alpha), (b, beta)] = sum_gamma t_ab(gamma)[alpha, beta]
                                  * exp(i k . (R gamma + r_b - r_a))

With these bond phases the position operator acts on fibers as ``i d/dk``,
so commutators with position become plain k-derivatives downstream.

Axes are 1-based throughout the public API (``i, j in 1..d``).
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _accel

HERMITIAN_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model description (bad field, inconsistent hopping, ...)."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class GeometryError(ModelError):
    """Lattice vectors that do not span a lattice."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticeSpec:
    vectors: np.ndarray

    def __post_init__(self):
        A = np.array(self.vectors, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not 1 <= A.shape[0] <= 3:
            raise GeometryError(f"lattice vectors must form a d x d matrix with d in 1..3, got shape {A.shape}")
        scale = max(np.abs(A).max(), 1.0)
        if abs(np.linalg.det(A)) <= 1e-12 * scale ** A.shape[0]:
            raise GeometryError("lattice vectors are linearly dependent")
        A.setflags(write=False)
        object.__setattr__(self, "vectors", A)

    @property
    def dimension(self):
        return self.vectors.shape[0]

    @cached_property
    def reciprocal(self):
        """Rows ``b_j`` with ``a_i . b_j = 2 pi delta_ij``."""
        B = 2.0 * np.pi * np.linalg.inv(self.vectors).T
        B.setflags(write=False)
        return B

    @property
    def cell_volume(self):
        return abs(float(np.linalg.det(self.vectors)))

    @property
    def bz_volume(self):
        return abs(float(np.linalg.det(self.reciprocal)))


@dataclass(frozen=True, eq=False)
class OrbitalSpec:
    id: str
    position: np.ndarray
    internal_dim: int = 1


@dataclass(frozen=True, eq=False)
class HoppingTerm:
    """Block ``t_ab(gamma)`` with shape ``(N_a, N_b)``; indices are site positions in the model."""

    source: int
    target: int
    offset: tuple
    amplitude: np.ndarray


@dataclass(frozen=True, eq=False)
class SpinMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        s = np.array(self.matrix, dtype=complex)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ModelError("spin matrix must be square", "spin.matrix")
        if np.abs(s - s.conj().T).max() > HERMITIAN_TOL:
            raise ModelError("spin matrix is not Hermitian", "spin.matrix")
        s.setflags(write=False)
        object.__setattr__(self, "matrix", s)

    def spectral(self, tol=1e-9):
        """Distinct eigenvalues ``s_l`` with their projectors ``p_l`` (ascending)."""
        w, v = np.linalg.eigh(self.matrix)
        out = []
        start = 0
        for n in range(1, len(w) + 1):
            if n == len(w) or w[n] - w[start] > tol:
                vecs = v[:, start:n]
                out.append((float(np.mean(w[start:n])), vecs @ vecs.conj().T))
                start = n
        return out


@dataclass(frozen=True, eq=False)
class Symmetry:
    """Declared rotation: order ``n`` in the 1-based ``plane``.

    ``rho`` acts on the internal space of every site and ``site_map[a]``
    is the image site of ``a``.
    """

    n: int
    plane: tuple
    rho: np.ndarray
    site_map: tuple


@dataclass(frozen=True, eq=False)
class BlochFiber:
    k: np.ndarray
    H: np.ndarray
    grad_H: np.ndarray


@dataclass(frozen=True, eq=False)
class Model:
    lattice: LatticeSpec
    orbitals: tuple
    hoppings: tuple
    spin: SpinMatrix = None
    mu: float = 0.0
    symmetry: Symmetry = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dimension(self):
        return self.lattice.dimension

    @property
    def n_sites(self):
        return len(self.orbitals)

    @cached_property
    def offsets(self):
        dims = [o.internal_dim for o in self.orbitals]
        return np.concatenate([[0], np.cumsum(dims)]).astype(int)

    @property
    def fiber_dim(self):
        return int(self.offsets[-1])

    @cached_property
    def positions(self):
        return np.array([o.position for o in self.orbitals], dtype=float).reshape(self.n_sites, self.dimension)

    @cached_property
    def site_of_index(self):
        """Site label of every fiber index."""
        return np.repeat(np.arange(self.n_sites), np.diff(self.offsets))

    @cached_property
    def index_positions(self):
        """Position of every fiber index, shape ``(M, d)``."""
        return self.positions[self.site_of_index]

    @cached_property
    def compiled(self):
        """Flat arrays ``(bonds, amps, rows, cols)`` consumed by the kernels."""
        A = self.lattice.vectors
        bonds, amps, rows, cols = [], [], [], []
        for h in self.hoppings:
            bond = np.asarray(h.offset, dtype=float) @ A + self.positions[h.target] - self.positions[h.source]
            r0, c0 = self.offsets[h.source], self.offsets[h.target]
            for (al, be), val in np.ndenumerate(h.amplitude):
                if val != 0:
                    bonds.append(bond)
                    amps.append(val)
                    rows.append(r0 + al)
                    cols.append(c0 + be)
        d = self.dimension
        return (
            np.array(bonds, dtype=np.float64).reshape(-1, d),
            np.array(amps, dtype=np.complex128),
            np.array(rows, dtype=np.int64),
            np.array(cols, dtype=np.int64),
        )

    def spin_operator(self, selector="sz"):
        """Fiber matrix of ``S = Id (x) s``.

        ``selector`` is ``"sz"`` (the model's spin matrix), ``"id"`` or an
        explicit internal matrix.
        """
        if isinstance(selector, str):
            if selector == "id":
                return np.eye(self.fiber_dim, dtype=complex)
            if selector != "sz":
                raise ModelError(f"unknown spin selector {selector!r}", "S")
            if self.spin is None:
                raise ModelError("model declares no spin matrix", "spin")
            s = self.spin.matrix
        else:
            s = SpinMatrix(selector).matrix
        return site_local(self, s)

    def with_positions(self, positions, hoppings):
        return Model(self.lattice, tuple(
            OrbitalSpec(o.id, np.asarray(p, dtype=float), o.internal_dim)
            for o, p in zip(self.orbitals, positions)
        ), tuple(hoppings), self.spin, self.mu, self.symmetry, self.name, dict(self.params))

    def with_mu(self, mu):
        return Model(self.lattice, self.orbitals, self.hoppings, self.spin, float(mu),
                     self.symmetry, self.name, dict(self.params))


def site_local(model, s):
    """Block-diagonal fiber matrix with the internal matrix ``s`` on every site."""
    s = np.asarray(s, dtype=complex)
    M = model.fiber_dim
    out = np.zeros((M, M), dtype=complex)
    for a, o in enumerate(model.orbitals):
        if o.internal_dim != s.shape[0]:
            raise ModelError(
                f"site {o.id!r} has internal dimension {o.internal_dim}, spin matrix has {s.shape[0]}", "spin")
        lo = model.offsets[a]
        out[lo:lo + s.shape[0], lo:lo + s.shape[0]] = s
    return out


# ---------------------------------------------------------------------------
# Construction with Hermiticity closure
# ---------------------------------------------------------------------------

def _close_hoppings(orbitals, terms, d):
    """Add the missing conjugate partners ``t_ba(-gamma) = t_ab(gamma)^*``."""
    given = {}
    for idx, h in enumerate(terms):
        key = (h.source, h.target, tuple(int(g) for g in h.offset))
        if len(key[2]) != d:
            raise ModelError(f"offset {list(key[2])} has wrong length (d={d})", f"hoppings[{idx}].offset")
        shape = (orbitals[h.source].internal_dim, orbitals[h.target].internal_dim)
        if h.amplitude.shape != shape:
            raise ModelError(f"amplitude block has shape {h.amplitude.shape}, expected {shape}",
                             f"hoppings[{idx}].amplitude")
        if key in given:
            raise ModelError(f"duplicate hopping {_fmt_key(orbitals, key)}", f"hoppings[{idx}]")
        given[key] = (idx, h.amplitude)

    closed = []
    seen = set()
    for key, (idx, t) in given.items():
        if key in seen:
            continue
        a, b, g = key
        partner = (b, a, tuple(-x for x in g))
        expected = t.conj().T
        if partner in given:
            other = given[partner][1]
            if np.abs(other - expected).max() > HERMITIAN_TOL:
                raise ModelError(
                    f"non-Hermitian pair: {_fmt_key(orbitals, key)} and {_fmt_key(orbitals, partner)} "
                    "are not adjoint to each other", f"hoppings[{given[partner][0]}]")
        closed.append(HoppingTerm(a, b, g, t))
        seen.add(key)
        if partner != key:
            closed.append(HoppingTerm(b, a, partner[2], given[partner][1] if partner in given else expected))
            seen.add(partner)
    return tuple(closed)


def _fmt_key(orbitals, key):
    a, b, g = key
    return f"t[{orbitals[a].id}->{orbitals[b].id}, {list(g)}]"


def make_model(vectors, orbitals, hoppings, spin=None, mu=0.0, symmetry=None, name="custom", params=None):
    """Build a :class:`Model` from Python objects, applying Hermiticity closure.

    ``orbitals`` is a list of ``(id, position, internal_dim)``; ``hoppings``
    a list of ``(source_id, target_id, offset, block)``.
    """
    lattice = LatticeSpec(vectors)
    d = lattice.dimension
    specs = []
    for n, (oid, pos, ndim) in enumerate(orbitals):
        pos = np.asarray(pos, dtype=float).reshape(-1)
        if pos.shape != (d,):
            raise ModelError(f"position has {pos.size} components, expected {d}", f"orbitals[{n}].position")
        if int(ndim) < 1:
            raise ModelError("internal_dim must be >= 1", f"orbitals[{n}].internal_dim")
        specs.append(OrbitalSpec(str(oid), pos, int(ndim)))
    ids = [o.id for o in specs]
    if len(set(ids)) != len(ids):
        raise ModelError("orbital ids are not unique", "orbitals")
    index = {oid: n for n, oid in enumerate(ids)}
    terms = []
    for n, (src, dst, off, block) in enumerate(hoppings):
        for which, label in (("from", src), ("to", dst)):
            if label not in index:
                raise ModelError(f"unknown orbital {label!r}", f"hoppings[{n}].{which}")
        block = np.atleast_2d(np.asarray(block, dtype=complex))
        terms.append(HoppingTerm(index[src], index[dst], tuple(int(x) for x in np.atleast_1d(off)), block))
    closed = _close_hoppings(specs, terms, d)
    if spin is not None and not isinstance(spin, SpinMatrix):
        spin = SpinMatrix(spin)
    if spin is not None:
        bad = [o.id for o in specs if o.internal_dim != spin.matrix.shape[0]]
        if bad:
            raise ModelError(f"spin matrix size {spin.matrix.shape[0]} does not match sites {bad}", "spin.matrix")
    return Model(lattice, tuple(specs), closed, spin, float(mu), symmetry, name, dict(params or {}))


# ---------------------------------------------------------------------------
# Bloch fibers
# ---------------------------------------------------------------------------

def bloch_batch(model, kpts, with_grad=True):
    """``H`` of shape ``(K, M, M)`` and ``dH`` of shape ``(d, K, M, M)`` at Cartesian ``kpts``."""
    kpts = np.asarray(kpts, dtype=float).reshape(-1, model.dimension)
    bonds, amps, rows, cols = model.compiled
    return _accel.assemble_bloch(kpts, bonds, amps, rows, cols, model.fiber_dim, with_grad)


def bloch_fiber(model, k):
    """Bloch matrix and analytic gradient at one Cartesian ``k``."""
    k = np.asarray(k, dtype=float).reshape(model.dimension)
    H, dH = bloch_batch(model, k[None, :])
    return BlochFiber(k, H[0], dH[:, 0])


def gauge_phase(model, g):
    """Diagonal of ``D(g) = diag(exp(-i g . r_a))`` relating ``H(k + g)`` to ``H(k)``."""
    return np.exp(-1j * model.index_positions @ np.asarray(g, dtype=float))


# ---------------------------------------------------------------------------
# Rotation symmetry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetryReport:
    residual: float
    spin_invariant: bool
    sites_mapped: bool
    rank_one_sites: bool
    symmetric: bool


def rotation_matrix(d, n, plane):
    i, j = plane[0] - 1, plane[1] - 1
    th = 2.0 * np.pi / n
    R = np.eye(d)
    R[i, i] = R[j, j] = math.cos(th)
    R[j, i] = math.sin(th)
    R[i, j] = -math.sin(th)
    return R


def rotation_operator(model, symmetry=None):
    """Full-fiber unitary built from a declared :class:`Symmetry`."""
    sym = symmetry or model.symmetry
    if sym is None:
        raise ModelError("model declares no rotation symmetry", "symmetry")
    M = model.fiber_dim
    P = np.zeros((M, M), dtype=complex)
    rho = np.asarray(sym.rho, dtype=complex)
    for a, b in enumerate(sym.site_map):
        ra, rb = model.offsets[a], model.offsets[b]
        P[rb:rb + rho.shape[0], ra:ra + rho.shape[1]] = rho
    return P


def check_rotation_symmetry(model, n, plane, rho, n_samples=50, seed=0, tol=1e-10):
    """Sampled test of ``rho H(R^-1 k) rho^* = H(k)`` for the rotation ``R`` by ``2 pi / n``.

    ``rho`` is the full-fiber unitary: ``rho[(pi(a), beta), (a, alpha)]``
    carries site ``a`` to its image ``pi(a)``.
    """
    if n == 0:
        raise ModelError("rotation order must be nonzero", "symmetry.n")
    d = model.dimension
    rho = np.asarray(rho, dtype=complex)
    M = model.fiber_dim
    if rho.shape != (M, M):
        raise ModelError(f"rho must be {M}x{M}", "symmetry.rho")
    if np.abs(rho.conj().T @ rho - np.eye(M)).max() > 1e-10:
        raise ModelError("rho is not unitary", "symmetry.rho")
    R = rotation_matrix(d, n, plane) if d >= 2 else np.eye(1) * (1.0 if n == 1 else -1.0 if n == 2 else np.nan)
    if not np.all(np.isfinite(R)):
        raise ModelError(f"order {n} rotation does not exist in d=1", "symmetry.n")

    rng = np.random.default_rng(seed)
    ks = rng.uniform(-1.0, 1.0, size=(n_samples, d)) @ model.lattice.reciprocal
    H, _ = bloch_batch(model, ks, with_grad=False)
    Hr, _ = bloch_batch(model, ks @ R, with_grad=False)  # rows are R^-1 k since R is orthogonal
    resid = float(np.abs(rho @ Hr @ rho.conj().T - H).max())

    if model.spin is not None and all(o.internal_dim == model.spin.matrix.shape[0] for o in model.orbitals):
        S = model.spin_operator("sz")
        spin_ok = bool(np.abs(rho.conj().T @ S @ rho - S).max() <= tol)
    else:
        spin_ok = True

    mapped = True
    A = model.lattice.vectors
    site = model.site_of_index
    for a in range(model.n_sites):
        cols = np.flatnonzero(site == a)
        images = sorted({int(site[r]) for r in np.flatnonzero(np.abs(rho[:, cols]).max(axis=1) > 1e-12)})
        if len(images) != 1:
            mapped = False
            break
        diff = (model.positions[a] @ R.T - model.positions[images[0]]) @ np.linalg.inv(A)
        if np.abs(diff - np.round(diff)).max() > 1e-9:
            mapped = False
            break

    rounded = {tuple(np.round(p, 9)) for p in model.positions}
    rank_one = len(rounded) == model.n_sites
    return SymmetryReport(resid, spin_ok, mapped, rank_one, bool(resid <= tol and spin_ok and mapped))


# ---------------------------------------------------------------------------
# Model file format (JSON)
# ---------------------------------------------------------------------------

def _complex_array(value, shape, where):
    arr = np.asarray(value, dtype=float)
    try:
        if arr.shape == (2,) and shape == (1, 1):
            arr = arr.reshape(1, 2)
        if arr.ndim == 2 and arr.shape[1] == 2 and arr.shape[0] == shape[0] * shape[1]:
            return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)
        if arr.shape == shape + (2,):
            return arr[..., 0] + 1j * arr[..., 1]
    except (ValueError, TypeError):
        pass
    raise ModelError(f"expected {shape[0]}x{shape[1]} complex entries as [re, im] pairs", where)


def _encode_complex(mat):
    # adding 0.0 turns -0.0 into 0.0 so files do not depend on conjugation history
    return [[float(z.real) + 0.0, float(z.imag) + 0.0] for z in np.asarray(mat, dtype=complex).reshape(-1)]


def _require(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelError(f"missing field {key!r}", where)
    return doc[key]


def parse_model(document):
    """Parse a model document (JSON text or an already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelError(f"malformed JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ModelError("model document must be an object", "<root>")

    lat = _require(doc, "lattice", "<root>")
    vectors = np.asarray(_require(lat, "vectors", "lattice"), dtype=float)
    d = int(lat.get("dimension", vectors.shape[0]))
    if vectors.shape != (d, d):
        raise GeometryError(f"expected {d} vectors of length {d}, got shape {vectors.shape}", "lattice.vectors")
    fractional = bool(lat.get("fractional_positions", False))

    orbitals = []
    for n, o in enumerate(_require(doc, "orbitals", "<root>")):
        where = f"orbitals[{n}]"
        pos = np.asarray(_require(o, "position", where), dtype=float).reshape(-1)
        if pos.shape != (d,):
            raise ModelError(f"position has {pos.size} components, expected {d}", where + ".position")
        if fractional:
            pos = pos @ vectors
        orbitals.append((str(_require(o, "id", where)), pos, int(o.get("internal_dim", 1))))
    dims = {oid: nd for oid, _, nd in orbitals}

    hoppings = []
    for n, h in enumerate(doc.get("hoppings", [])):
        where = f"hoppings[{n}]"
        src, dst = _require(h, "from", where), _require(h, "to", where)
        for which, label in (("from", src), ("to", dst)):
            if label not in dims:
                raise ModelError(f"unknown orbital {label!r}", f"{where}.{which}")
        off = _require(h, "offset", where)
        block = _complex_array(_require(h, "amplitude", where), (dims[src], dims[dst]), where + ".amplitude")
        hoppings.append((src, dst, off, block))

    spin = None
    if doc.get("spin") is not None:
        m = _require(doc["spin"], "matrix", "spin")
        size = len(m) if np.ndim(m) == 3 else int(round(math.sqrt(len(m))))
        spin = _complex_array(m, (size, size), "spin.matrix")

    mu = float(doc.get("fermi", {}).get("mu", 0.0))
    model = make_model(vectors, orbitals, hoppings, spin, mu, None, doc.get("name", "custom"), doc.get("params", {}))

    sym = doc.get("symmetry")
    if sym is not None:
        nint = int(_require(sym, "n", "symmetry"))
        if nint == 0:
            raise ModelError("rotation order must be nonzero", "symmetry.n")
        plane = tuple(int(x) for x in sym.get("plane", (1, 2)))
        N = model.orbitals[0].internal_dim
        rho = _complex_array(_require(sym, "rho", "symmetry"), (N, N), "symmetry.rho")
        ids = [o.id for o in model.orbitals]
        smap = sym.get("site_map", ids)
        try:
            smap = tuple(ids.index(s) for s in smap)
        except ValueError:
            raise ModelError("site_map refers to an unknown orbital", "symmetry.site_map") from None
        model = Model(model.lattice, model.orbitals, model.hoppings, model.spin, model.mu,
                      Symmetry(nint, plane, rho, smap), model.name, model.params)
    return model


def load_model(path):
    return parse_model(Path(path).read_text())


def model_to_document(model):
    """Serialize a model (after closure) to the documented JSON structure."""
    ids = [o.id for o in model.orbitals]
    doc = {
        "name": model.name,
        "params": {k: float(v) for k, v in model.params.items()},
        "lattice": {"dimension": model.dimension, "vectors": model.lattice.vectors.tolist()},
        "orbitals": [
            {"id": o.id, "position": [float(x) for x in o.position], "internal_dim": o.internal_dim}
            for o in model.orbitals
        ],
        "hoppings": [
            {"from": ids[h.source], "to": ids[h.target], "offset": list(h.offset),
             "amplitude": _encode_complex(h.amplitude)}
            for h in model.hoppings
        ],
        "fermi": {"mu": model.mu},
    }
    if model.spin is not None:
        doc["spin"] = {"matrix": _encode_complex(model.spin.matrix)}
    if model.symmetry is not None:
        s = model.symmetry
        doc["symmetry"] = {"n": s.n, "plane": list(s.plane), "rho": _encode_complex(s.rho),
                           "site_map": [ids[b] for b in s.site_map]}
    return doc


def dump_model(model):
    return json.dumps(model_to_document(model), indent=1) + "\n"


# ---------------------------------------------------------------------------
# Builtin models
# ---------------------------------------------------------------------------

SQRT3 = math.sqrt(3.0)
HONEYCOMB = np.array([[1.0, 0.0], [0.5, SQRT3 / 2.0]])
# Hexagon centre at the origin, so C3 (and, for equal sublattices, inversion) act about it.
HONEYCOMB_SITES = (HONEYCOMB.sum(axis=0) / 3.0, 2.0 * HONEYCOMB.sum(axis=0) / 3.0)
NN_OFFSETS = ((0, 0), (-1, 0), (0, -1))        # A -> B
NNN_OFFSETS = ((1, 0), (-1, 1), (0, -1))       # same-sublattice hops turning the same way
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

BUILTIN_DEFAULTS = {
    "flat_two_band": {"mu": 0.0},
    "ssh_dimer": {"t1": 1.0, "t2": 0.7, "mu": 0.0},
    "haldane": {"t1": 1.0, "t2": 0.1, "phi": math.pi / 2, "M": 0.0, "mu": 0.0},
    # Rashba pulls the conduction bottom below zero near K (to ~ -0.005 at lambda_R = 0.1), so
    # the default Fermi level sits inside the gap of the whole lambda_R <= 0.1 family.
    "kane_mele": {"t": 1.0, "lambda_SO": 0.06, "lambda_v": 0.1, "lambda_R": 0.0, "delta_nn": 0.0,
                  "exchange_A": 0.0, "mu": -0.1},
}


def _flat_two_band(p):
    return make_model([[1.0]], [("a", [0.0], 2)], [("a", "a", [0], np.diag([-1.0, 1.0]))],
                      spin=PAULI["z"] / 2, mu=p["mu"], name="flat_two_band", params=p)


def _ssh_dimer(p):
    return make_model(
        [[1.0]], [("A", [0.0], 1), ("B", [0.5], 1)],
        [("A", "B", [0], p["t1"]), ("A", "B", [-1], p["t2"])],
        mu=p["mu"], name="ssh_dimer", params=p)


def _haldane(p):
    rA, rB = HONEYCOMB_SITES
    hops = [("A", "B", g, p["t1"]) for g in NN_OFFSETS]
    phase = np.exp(1j * p["phi"])
    hops += [("A", "A", g, p["t2"] * phase) for g in NNN_OFFSETS]
    hops += [("B", "B", g, p["t2"] * np.conj(phase)) for g in NNN_OFFSETS]
    hops += [("A", "A", (0, 0), p["M"]), ("B", "B", (0, 0), -p["M"])]
    sym = Symmetry(3, (1, 2), np.eye(1, dtype=complex), (0, 1))
    return make_model(HONEYCOMB, [("A", rA, 1), ("B", rB, 1)], hops, symmetry=sym, mu=p["mu"],
                      name="haldane", params=p)


def _kane_mele(p):
    rA, rB = HONEYCOMB_SITES
    sx, sy, sz = PAULI["x"], PAULI["y"], PAULI["z"]
    eye = np.eye(2, dtype=complex)
    hops = []
    for n, g in enumerate(NN_OFFSETS):
        bond = np.asarray(g, dtype=float) @ HONEYCOMB + rB - rA
        dx, dy = bond / np.linalg.norm(bond)
        t = p["t"] + (p["delta_nn"] if n == 0 else 0.0)
        hops.append(("A", "B", g, t * eye + 1j * p["lambda_R"] * (sx * dy - sy * dx)))
    # sign of the intrinsic term chosen so the spin-up block carries Chern +1
    for g in NNN_OFFSETS:
        hops.append(("A", "A", g, 1j * p["lambda_SO"] * sz))
        hops.append(("B", "B", g, -1j * p["lambda_SO"] * sz))
    # exchange_A: in-plane exchange field on sublattice A; breaks time reversal and C3
    hops += [("A", "A", (0, 0), p["lambda_v"] * eye + p["exchange_A"] * sx), ("B", "B", (0, 0), -p["lambda_v"] * eye)]
    s = sz / 2
    rho = np.diag(np.exp(-1j * (2 * np.pi / 3) * np.diag(s)))
    sym = Symmetry(3, (1, 2), rho, (0, 1))
    return make_model(HONEYCOMB, [("A", rA, 2), ("B", rB, 2)], hops, spin=s, mu=p["mu"], symmetry=sym,
                      name="kane_mele", params=p)


_BUILDERS = {
    "flat_two_band": _flat_two_band,
    "ssh_dimer": _ssh_dimer,
    "haldane": _haldane,
    "kane_mele": _kane_mele,
}

_ALIASES = {"lambda_so": "lambda_SO", "λ_so": "lambda_SO", "lambda_r": "lambda_R", "λ_r": "lambda_R",
            "lambda_v": "lambda_v", "λ_v": "lambda_v", "φ": "phi", "m": "M"}


def builtin_model(name, params=None, complete=False):
    """Canonical builtin model.

    Missing parameters take their defaults unless ``complete`` is true, in
    which case every parameter must be supplied.
    """
    if name not in _BUILDERS:
        raise ModelError(f"unknown builtin {name!r}; choose from {sorted(_BUILDERS)}", "builtin")
    defaults = BUILTIN_DEFAULTS[name]
    given = {}
    for key, val in (params or {}).items():
        canon = key if key in defaults else _ALIASES.get(key.lower(), key)
        if canon not in defaults:
            raise ModelError(f"unknown parameter {key!r} for {name}; expected {sorted(defaults)}", "param")
        given[canon] = float(val)
    missing = sorted(set(defaults) - set(given))
    if complete and missing:
        raise ModelError(f"missing parameters {missing} for {name}", "param")
    merged = {**defaults, **given}
    return _BUILDERS[name](merged)


def shifted_model(model, cell_shift):
    """Same operator with orbital ``a`` represented at ``r_a + R gamma_a``.

    Hoppings are re-indexed as ``t'_ab(gamma) = t_ab(gamma + gamma_b - gamma_a)``
    so that every Bloch matrix is unchanged.
    """
    d = model.dimension
    shifts = np.asarray(cell_shift)
    if shifts.shape != (model.n_sites, d) or not np.all(shifts == np.round(shifts)):
        raise ModelError(f"cell shift must be an integer array of shape ({model.n_sites}, {d})", "shift")
    shifts = shifts.astype(int)
    positions = model.positions + shifts @ model.lattice.vectors
    hops = [
        HoppingTerm(h.source, h.target,
                    tuple(int(x) for x in np.asarray(h.offset) - shifts[h.target] + shifts[h.source]),
                    h.amplitude)
        for h in model.hoppings
    ]
    return model.with_positions(positions, hops)
