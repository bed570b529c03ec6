"""First-order flux-weighted derivative operators and their compositions.

The reference computations here avoid the package's own basis tables:
point values come from numpy's Legendre module and endpoint traces from
the closed forms P_m(1) = 1, P_m(-1) = (-1)^m, P_m'(+-1) = (+-1)^(m+1)
m (m + 1) / 2.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from rkdg_lab import (
    DGFunction,
    LinearOperator,
    Mesh1D,
    assemble_d_theta,
    assemble_high_order_lh,
    assemble_ultraweak_third,
    check_high_order_admissible,
    high_order_flux_sequence,
    jump_energy,
    middle_theta,
    operator_norm,
    project_l2,
    quadratic_form,
    semiboundedness_mu,
)
from conftest import random_dg


def eval_cell(u, j, xi, deriv=0):
    """u or its xi-derivative on cell j at reference points xi."""
    h = u.mesh.widths[j]
    vals = np.zeros_like(xi, dtype=float)
    for m in range(u.degree + 1):
        c = np.zeros(m + 1)
        c[m] = 1.0
        if deriv:
            c = np.polynomial.legendre.legder(c, deriv)
        vals += u.coeffs[j, m] * np.sqrt((2 * m + 1) / h) * np.polynomial.legendre.legval(xi, c)
    return vals * (2.0 / h) ** deriv


def interface_traces(u, deriv=0):
    """(minus, plus) traces of u or u' at the interfaces, via closed-form
    endpoint values of the Legendre polynomials."""
    k, mesh = u.degree, u.mesh
    m = np.arange(k + 1)
    if deriv == 0:
        right_ref, left_ref = np.ones(k + 1), (-1.0) ** m
    else:
        right_ref = m * (m + 1) / 2.0
        left_ref = (-1.0) ** (m + 1) * right_ref
    scale = np.sqrt((2 * m + 1) / mesh.widths[:, None])
    chain = (2.0 / mesh.widths) ** deriv
    left = (u.coeffs * scale * left_ref).sum(axis=1) * chain
    right = (u.coeffs * scale * right_ref).sum(axis=1) * chain
    return right, np.roll(left, -1)


# ---------------------------------------------------------------------------
# The single-derivative operator D_theta
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("theta,degree", [(1.0, 1), (0.6, 2), (0.0, 1), (0.25, 3)])
def test_weak_form_of_d_theta(theta, degree):
    """<D_theta u, v> = -sum_j int_j u v' + sum_i uhat_i (v_minus - v_plus),
    with the flux uhat = theta u_minus + (1 - theta) u_plus."""
    mesh = Mesh1D.perturbed(10, rel=0.25, seed=8)
    rng = np.random.default_rng(17)
    u = random_dg(mesh, degree, rng)
    v = random_dg(mesh, degree, rng)
    op = assemble_d_theta(mesh, degree, theta)
    lhs = float(v.vector @ op.apply(u.vector))

    xi, wq = np.polynomial.legendre.leggauss(degree + 2)
    volume = 0.0
    for j in range(mesh.n_cells):
        uv = eval_cell(u, j, xi)
        dv = eval_cell(v, j, xi, deriv=1)
        volume += 0.5 * mesh.widths[j] * np.sum(wq * uv * dv)
    u_minus, u_plus = interface_traces(u)
    v_minus, v_plus = interface_traces(v)
    flux = theta * u_minus + (1.0 - theta) * u_plus
    rhs = -volume + np.sum(flux * (v_minus - v_plus))
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(rhs))


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 1.0])
def test_transpose_flips_theta(theta):
    mesh = Mesh1D.perturbed(12, rel=0.2, seed=3)
    a = assemble_d_theta(mesh, 2, theta).dense()
    b = assemble_d_theta(mesh, 2, 1.0 - theta).dense()
    np.testing.assert_allclose(a.T, -b, atol=1e-12 * max(1.0, np.abs(a).max()))


@pytest.mark.parametrize("theta", [0.0, 0.5, 0.75, 1.0])
def test_quadratic_form_is_weighted_jump_energy(theta):
    mesh = Mesh1D.perturbed(9, rel=0.3, seed=6)
    rng = np.random.default_rng(23)
    u = random_dg(mesh, 2, rng)
    op = assemble_d_theta(mesh, 2, theta)
    expected = (theta - 0.5) * jump_energy(u)
    assert abs(quadratic_form(op, u.vector) - expected) < 1e-11


def test_jump_energy_definition():
    rng = np.random.default_rng(2)
    u = random_dg(Mesh1D.uniform(7), 1, rng)
    assert abs(jump_energy(u) - np.sum(u.jumps() ** 2)) < 1e-13


def test_constants_in_kernel_and_mean_zero_range():
    mesh = Mesh1D.perturbed(8, rel=0.2, seed=1)
    op = assemble_d_theta(mesh, 2, 0.8)
    one = project_l2(lambda x: np.ones_like(x), mesh, 2)
    assert np.linalg.norm(op.apply(one.vector)) < 1e-13
    rng = np.random.default_rng(5)
    u = random_dg(mesh, 2, rng)
    image = DGFunction.from_vector(mesh, 2, op.apply(u.vector))
    assert abs(image.integral()) < 1e-12 * max(1.0, np.linalg.norm(u.vector))


# ---------------------------------------------------------------------------
# Flux parameter bookkeeping for compositions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("q,expected_even", [(1, True), (3, False), (5, True), (7, False)])
def test_middle_theta_alternates_with_gamma_parity(q, expected_even):
    assert middle_theta(q, 0.3) == (0.3 if expected_even else 0.7)


def test_flux_sequence_layout():
    assert high_order_flux_sequence(1, 0.8, ()) == [0.8]
    assert high_order_flux_sequence(2, None, (0.75,)) == [0.25, 0.75]
    np.testing.assert_allclose(
        high_order_flux_sequence(3, 0.3, (0.8,)), [0.2, 0.7, 0.8]
    )
    np.testing.assert_allclose(
        high_order_flux_sequence(4, None, (0.6, 0.9)), [0.1, 0.4, 0.6, 0.9]
    )


def test_flux_sequence_rejects_wrong_counts():
    with pytest.raises(ValueError):
        high_order_flux_sequence(2, None, ())
    with pytest.raises(ValueError):
        high_order_flux_sequence(4, None, (0.6,))
    with pytest.raises(ValueError):
        high_order_flux_sequence(3, None, (0.8,))  # odd q needs theta0


@pytest.mark.parametrize(
    "q,beta,theta0,ok",
    [
        (1, -1.0, 1.0, True),    # advection, upwind side
        (1, -1.0, 0.5, True),    # central flux sits on the boundary of the set
        (1, 1.0, 0.75, False),
        (2, 1.0, None, True),    # heat
        (2, -1.0, None, False),
        (3, -1.0, 1.0, True),    # dispersive
        (3, 1.0, 1.0, False),
        (3, 1.0, 0.25, True),
        (4, -1.0, None, True),
        (4, 1.0, None, False),
    ],
)
def test_admissibility_sign_conditions(q, beta, theta0, ok):
    if ok:
        check_high_order_admissible(q, beta, theta0)
    else:
        with pytest.raises(ValueError):
            check_high_order_admissible(q, beta, theta0)


def test_admissibility_rejects_degenerate_input():
    with pytest.raises(ValueError):
        check_high_order_admissible(0, -1.0, 1.0)
    with pytest.raises(ValueError):
        check_high_order_admissible(2, 0.0, None)


# ---------------------------------------------------------------------------
# Composite operators
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "q,beta,theta0,thetas",
    [(1, -1.0, 1.0, ()), (2, 1.0, None, (0.8,)), (3, -1.0, 0.7, (1.0,))],
)
def test_composition_is_product_of_first_order_factors(q, beta, theta0, thetas):
    mesh = Mesh1D.perturbed(8, rel=0.2, seed=4)
    lh = assemble_high_order_lh(mesh, 2, q, beta, theta0=theta0, thetas=thetas)
    seq = high_order_flux_sequence(q, theta0, thetas)
    prod = sp.identity(lh.n, format="csr")
    for t in seq:
        prod = prod @ assemble_d_theta(mesh, 2, t).mat
    np.testing.assert_allclose(
        lh.dense(), beta * prod.toarray(), atol=1e-12 * np.abs(prod).max()
    )


@pytest.mark.parametrize(
    "q,beta,theta0,thetas,degree",
    [
        (1, -1.0, 1.0, (), 1),
        (2, 1.0, None, (1.0,), 2),
        (3, -1.0, 1.0, (1.0,), 2),
        (4, -1.0, None, (1.0, 0.75), 1),
    ],
)
def test_admissible_compositions_are_semibounded(q, beta, theta0, thetas, degree):
    mesh = Mesh1D.perturbed(10, rel=0.25, seed=7)
    op = assemble_high_order_lh(mesh, degree, q, beta, theta0=theta0, thetas=thetas)
    assert semiboundedness_mu(op) <= 1e-10


def test_assembly_refuses_inadmissible_parameters():
    mesh = Mesh1D.uniform(8)
    with pytest.raises(ValueError):
        assemble_high_order_lh(mesh, 1, 2, -1.0, thetas=(1.0,))


def test_upwind_derivative_is_consistent_under_refinement():
    """On projected sin the q = 1 operator lands near cos, and the defect
    shrinks when the mesh refines (plain L2 data, so no exact commuting)."""
    defects = []
    for n in (24, 48):
        mesh = Mesh1D.uniform(n)
        op = assemble_high_order_lh(mesh, 2, 1, -1.0, theta0=1.0)
        u = project_l2(np.sin, mesh, 2)
        target = project_l2(lambda x: -np.cos(x), mesh, 2)
        defect = DGFunction.from_vector(mesh, 2, op.apply(u.vector)) - target
        defects.append(defect.norm())
    assert defects[1] < 0.05
    assert defects[1] < 0.6 * defects[0]


# ---------------------------------------------------------------------------
# Ultra-weak third derivative
# ---------------------------------------------------------------------------


def test_ultraweak_energy_is_derivative_jump_dissipation():
    """<L v, v> = -1/2 sum over interfaces of [v']^2."""
    mesh = Mesh1D.perturbed(9, rel=0.2, seed=12)
    op = assemble_ultraweak_third(mesh, 3)
    rng = np.random.default_rng(31)
    u = random_dg(mesh, 3, rng)
    dminus, dplus = interface_traces(u, deriv=1)
    expected = -0.5 * np.sum((dplus - dminus) ** 2)
    assert abs(quadratic_form(op, u.vector) - expected) <= 1e-10 * max(1.0, abs(expected))
    assert semiboundedness_mu(op) <= 1e-10


def test_ultraweak_warns_below_design_degree():
    with pytest.warns(UserWarning):
        assemble_ultraweak_third(Mesh1D.uniform(8), 2)


# ---------------------------------------------------------------------------
# Norm and symmetric-part estimates
# ---------------------------------------------------------------------------


def test_operator_norm_dense_path_matches_svd():
    rng = np.random.default_rng(14)
    mat = sp.random(60, 60, density=0.2, random_state=14, format="csr")
    ref = np.linalg.svd(mat.toarray(), compute_uv=False)[0]
    assert abs(operator_norm(LinearOperator(mat)) - ref) < 1e-10


def test_operator_norm_power_iteration_on_known_diagonal():
    vals = np.concatenate([np.linspace(-1.0, 1.0, 2099), [3.0]])
    op = LinearOperator(sp.diags(vals).tocsr())
    assert op.n > 2000  # forces the matrix-free branch
    assert abs(operator_norm(op) - 3.0) < 1e-6


def test_semiboundedness_power_iteration_on_gapped_spectrum():
    vals = np.concatenate([np.linspace(-2.0, 0.0, 1599), [1.5]])
    op = LinearOperator(sp.diags(vals).tocsr())
    assert op.n > 1500
    assert abs(semiboundedness_mu(op) - 1.5) < 1e-9


def test_semiboundedness_is_attained_rayleigh_maximum():
    rng = np.random.default_rng(9)
    dense = rng.standard_normal((40, 40))
    op = LinearOperator(sp.csr_matrix(dense))
    mu = semiboundedness_mu(op)
    for _ in range(50):
        v = rng.standard_normal(40)
        v /= np.linalg.norm(v)
        assert float(v @ (dense @ v)) <= mu + 1e-12
    # the bound is sharp: the top eigenvector of the symmetric part attains it
    w, vecs = np.linalg.eigh(0.5 * (dense + dense.T))
    top = vecs[:, -1]
    assert abs(float(top @ (dense @ top)) - mu) < 1e-10
