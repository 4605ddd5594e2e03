import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from qsh_transport.mesh import BZMesh
from qsh_transport.model import builtin_model
from qsh_transport.spectral import GapError
from qsh_transport.transport import (TransportFibers, btorque_check, cell_measure, chern_number, kubo_sigma,
                                     per_orbital_torque, persistent_current, robustness_sweep, sigma_conv,
                                     sigma_prop, sigma_rot, spin_chern, ucc_check)

TWO_PI = 2 * math.pi
BROKEN = {"lambda_R": 0.1, "delta_nn": 0.1}
EXCHANGE = {"lambda_R": 0.1, "delta_nn": 0.1, "exchange_A": 0.05}


@pytest.fixture(scope="module")
def hal48():
    m = builtin_model("haldane")
    return m, BZMesh.for_model(m, 48)


def test_torus_kernel_diagonal_oracle():
    m = builtin_model("kane_mele", EXCHANGE)
    mesh = BZMesh.for_model(m, 4)
    f = TransportFibers(m, mesh, None, 1, 2, "sz")
    T = per_orbital_torque(m, mesh, 2, "sz", fibers=f)
    ref, tor = oracles.torus_torque(m, 4, f.Pi1, mesh.kpts, m.spin_operator("sz"))
    assert np.abs(np.asarray(T) - ref).max() < 1e-10
    assert np.abs(ref).max() > 1e-5  # the oracle compares genuinely nonzero numbers
    # the torus Fermi projector agrees with the inverse transform of the fibers
    assert np.abs(tor.from_fibers(mesh.kpts, f.P) - tor.fermi_projector(m.mu)).max() < 1e-12


def test_chern_both_phases(hal48):
    m, mesh = hal48
    assert chern_number(m, mesh).value == 1.0
    assert chern_number(m, mesh, i=2, j=1).value == -1.0
    trivial = builtin_model("haldane", {"M": 1.0})
    assert chern_number(trivial, mesh).value == 0.0
    flipped = builtin_model("haldane", {"phi": -math.pi / 2})
    assert chern_number(flipped, mesh).value == -1.0


def test_charge_conductivity_equals_chern(hal48):
    m, mesh = hal48
    rep = sigma_conv(m, mesh, S="id")
    assert abs(rep.sigma - 1 / TWO_PI) < 1e-4
    assert rep.residual < 1e-12


def test_longitudinal_response_rejected():
    m = builtin_model("flat_two_band")
    with pytest.raises(ValueError, match="i != j"):
        sigma_conv(m, BZMesh.for_model(m, 8), 1, 1)


def test_spin_chern_kane_mele():
    m = builtin_model("kane_mele")
    mesh = BZMesh.for_model(m, 24)
    rep = spin_chern(m, mesh)
    assert rep.value == 1.0 and rep.blocks == [-1.0, 1.0]
    trivial = builtin_model("kane_mele", {"lambda_v": 1.0, "mu": 0.0})
    assert spin_chern(trivial, mesh).value == 0.0


def test_conserved_spin_case():
    m = builtin_model("kane_mele")
    mesh = BZMesh.for_model(m, 48)
    rep = sigma_prop(m, mesh)
    assert rep.sigma_rot == 0.0 and rep.sigma_prop == rep.sigma_conv
    assert abs(rep.sigma_prop - 1 / TWO_PI) < 1e-4
    for key in ("E1", "E2", "E3", "E4"):
        assert abs(rep.extra_terms[key]) < 1e-10
    assert abs(rep.extra_terms["C"].real - 1 / TWO_PI) < 1e-4


@pytest.mark.parametrize("params", [{"lambda_R": 0.05}, {"lambda_R": 0.1}])
def test_c3_symmetric_zeros(params):
    m = builtin_model("kane_mele", params)
    mesh = BZMesh.for_model(m, 48)
    rep = sigma_prop(m, mesh, eta_list=(), with_topology=False)
    assert max(abs(t) for t in rep.torque) < 1e-10
    assert abs(rep.sigma_rot) < 1e-9 and abs(rep.persistent_current) < 1e-10
    assert rep.residuals["split_difference"] < 1e-12
    assert rep.residuals["conv_theorem_vs_direct"] < 1e-12


def test_sum_of_torques_vanishes_on_broken_model():
    m = builtin_model("kane_mele", EXCHANGE)
    T = per_orbital_torque(m, BZMesh.for_model(m, 192))
    assert abs(sum(T)) < 1e-10 and max(abs(t) for t in T) > 1e-5


def test_btorque_identity_general_b():
    m = builtin_model("kane_mele", BROKEN)
    mesh = BZMesh.for_model(m, 24)
    rng = np.random.default_rng(11)
    C = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    C = C + C.conj().T

    def B(k):
        ph = np.cos(k[:, 0])[:, None, None]
        return ph * C[None]

    lhs, rhs, vanishing = btorque_check(m, mesh, B)
    assert abs(lhs - rhs) < 1e-10 and vanishing is None and abs(lhs) > 1e-6


def test_btorque_constant_b():
    m = builtin_model("haldane")
    mesh = BZMesh.for_model(m, 24)
    assert btorque_check(m, mesh, np.eye(2)) == (0, 0, True)
    # a constant B that mixes the two sites does not commute with position
    C = np.array([[0.3, 1 - 0.5j], [1 + 0.5j, -0.2]])
    lhs, rhs, vanishing = btorque_check(m, mesh, C)
    assert abs(lhs - rhs) < 1e-10 and abs(lhs) > 1e-2 and vanishing is None
    km = builtin_model("kane_mele", {"lambda_R": 0.1})
    B = km.spin_operator(np.array([[0.2, 1j], [-1j, 0.7]]))
    lhs, rhs, vanishing = btorque_check(km, BZMesh.for_model(km, 192), B)
    assert vanishing is True and abs(lhs - rhs) < 1e-10


def test_origin_shift_invariance_of_sigma_rot():
    m = builtin_model("kane_mele", EXCHANGE)
    val, defect, _ = sigma_rot(m, BZMesh.for_model(m, 192))
    assert defect < 1e-10


def test_ucc_predicted_shift():
    m = builtin_model("kane_mele", EXCHANGE)
    rep = ucc_check(m, BZMesh.for_model(m, 96), [[1, 0], [0, 0]])
    assert rep.delta_conv < 1e-12
    assert abs(rep.delta_rot - rep.predicted_delta_rot) < 1e-10
    assert abs(rep.predicted_delta_rot) > 1e-7


@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=2, max_size=2))
def test_ucc_conventional_invariant(shift):
    m = builtin_model("haldane")
    rep = ucc_check(m, BZMesh.for_model(m, 12), shift, S="id")
    assert rep.delta_conv < 1e-10


def test_kubo_converges_monotonically(hal48):
    m, mesh = hal48
    vals = kubo_sigma(m, mesh, 1, 2, (1e-1, 1e-2, 1e-3), S="id")
    dev = [abs(v - 1 / TWO_PI) for v in vals]
    assert dev[0] > dev[1] > dev[2] and dev[2] < 1e-3


def test_counting_measure():
    m = builtin_model("haldane")
    mesh = BZMesh.for_model(m, 24)
    assert cell_measure(m, "counting") == 2.0
    g = sigma_conv(m, mesh, S="id").sigma
    c = sigma_conv(m, mesh, S="id", normalization="counting").sigma
    assert c == pytest.approx(g * m.lattice.cell_volume / 2, rel=1e-12)
    with pytest.raises(ValueError):
        cell_measure(m, "bogus")


def test_persistent_current_real_on_symmetric_model():
    m = builtin_model("kane_mele", {"lambda_R": 0.1})
    pc = persistent_current(m, BZMesh.for_model(m, 24))
    assert abs(pc) < 1e-10


def test_robustness_sweep_rows():
    family = lambda lam: builtin_model("kane_mele", {"lambda_R": lam})
    m = family(0.0)
    table = robustness_sweep(family, BZMesh.for_model(m, 24), [0.0, 0.05])
    assert [r["s_chern"] for r in table.rows] == [1.0, 1.0]
    assert table.rows[0]["deviation"] < table.rows[1]["deviation"]


def test_gap_closure_is_reported():
    m = builtin_model("haldane", {"mu": 2.0})
    with pytest.raises(GapError):
        sigma_prop(m, BZMesh.for_model(m, 12), S="id")


def test_report_is_worker_independent():
    m = builtin_model("kane_mele", {"lambda_R": 0.1})
    mesh = BZMesh.for_model(m, 24)
    a = sigma_prop(m, mesh, workers=1)
    b = sigma_prop(m, mesh, workers=5)
    assert a.sigma_prop == b.sigma_prop and a.torque == b.torque and a.residuals == b.residuals
