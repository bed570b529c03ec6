"""First-order systems: the alpha-beta flux family for the wave system,
an energy-conserving two-field scheme, and a central scheme on
overlapping meshes.

State layout for the two-field operators is [w-coefficients,
chi-coefficients], each block cell-major as in the scalar case. The
central scheme stores [primal coefficients, dual coefficients].

Jump convention everywhere: [u] = u_plus - u_minus. The numerical
fluxes below are written against the opposite orientation of the jump
(minus minus plus), which is why beta enters the assembled blocks with
a positive sign and the energy identity reads

    <L V, V> = beta2 * sum [w]^2 + beta1 * sum [chi]^2,

so beta1, beta2 <= 0 is the dissipative regime and is enforced.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core_fem import (
    DGFunction,
    Mesh1D,
    gauss_rule,
    legendre_table,
    _basis_scale,
)
from .dg_ops1d import LinearOperator, volume_derivative_blocks, _trace_vectors


def _coo_from_blocks(blocks, n_rows: int, n_cols: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for r0, c0, block in blocks:
        br, bc = block.shape
        rr, cc = np.meshgrid(r0 + np.arange(br), c0 + np.arange(bc), indexing="ij")
        rows.append(rr.reshape(-1))
        cols.append(cc.reshape(-1))
        vals.append(block.reshape(-1))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, n_cols),
    ).tocsr()


def _volume_matrix(mesh: Mesh1D, degree: int) -> sp.csr_matrix:
    """Block diagonal of <phi_m, phi_mp'>_j."""
    vol = volume_derivative_blocks(mesh, degree)
    k1 = degree + 1
    blocks = [(j * k1, j * k1, vol[j]) for j in range(mesh.n_cells)]
    n = mesh.n_cells * k1
    return _coo_from_blocks(blocks, n, n)


def _flux_matrix(mesh: Mesh1D, degree: int, a: float, b: float) -> sp.csr_matrix:
    """Matrix of the interface form sum_i (a u_minus + b u_plus)_i [v]_i."""
    n_cells, k1 = mesh.n_cells, degree + 1
    left, right = _trace_vectors(mesh, degree)
    blocks = []
    for i in range(n_cells):
        ip = (i + 1) % n_cells
        trial_minus = right[i]
        trial_plus = left[ip]
        # [v] = v_plus - v_minus splits into rows of cells ip and i.
        blocks.append((ip * k1, i * k1, a * np.outer(trial_plus, trial_minus)))
        blocks.append((i * k1, i * k1, -a * np.outer(trial_minus, trial_minus)))
        blocks.append((ip * k1, ip * k1, b * np.outer(trial_plus, trial_plus)))
        blocks.append((i * k1, ip * k1, -b * np.outer(trial_minus, trial_plus)))
    n = n_cells * k1
    return _coo_from_blocks(blocks, n, n)


def assemble_wave_alphabeta(
    mesh: Mesh1D, degree: int, alpha: float, beta1: float, beta2: float
) -> LinearOperator:
    """Two-field wave system w_t = chi_x, chi_t = w_x with the two-
    parameter interface fluxes

        hat(w) = {w} + alpha [w] + beta1 [chi]
        hat(chi) = {chi} - alpha [chi] + beta2 [w]

    (jumps oriented minus minus plus in these formulas). The discrete
    energy obeys d/dt |V|^2 / 2 = beta2 sum [w]^2 + beta1 sum [chi]^2,
    so nonpositive beta1, beta2 are required. alpha is free; the
    accuracy of the pair is governed by alpha^2 + beta1 beta2.
    """
    if beta1 > 0 or beta2 > 0:
        raise ValueError(
            f"beta1 and beta2 must be <= 0 for a non-increasing energy, "
            f"got beta1={beta1:g}, beta2={beta2:g}"
        )
    bvol = _volume_matrix(mesh, degree)
    # hat(chi) enters the w-equation: {chi} - alpha [chi] maps to the
    # package jump orientation as (1/2 + alpha) chi_minus + (1/2 - alpha) chi_plus.
    g_chi = _flux_matrix(mesh, degree, 0.5 - alpha, 0.5 + alpha)
    g_w = _flux_matrix(mesh, degree, 0.5 + alpha, 0.5 - alpha)
    g_jump = _flux_matrix(mesh, degree, -1.0, 1.0)
    top = [beta2 * g_jump, -bvol - g_chi]
    bottom = [-bvol - g_w, beta1 * g_jump]
    mat = sp.bmat([[top[0], top[1]], [bottom[0], bottom[1]]], format="csr")
    return LinearOperator(mat, label=f"wave[alpha={alpha:g},b1={beta1:g},b2={beta2:g}]")


def assemble_energy_conserving_pair(mesh: Mesh1D, degree: int) -> LinearOperator:
    """Decoupled-characteristics system U_t + (B U)_x = 0, B = diag(1, -1),
    with the conservative flux pair

        hat(w) = {w} + 1/2 [chi]
        hat(chi) = {chi} + 1/2 [w]

    (jumps again oriented minus minus plus). The assembled matrix is
    exactly skew-symmetric, so every trajectory conserves the discrete
    L2 norm; there is no dissipation to hide behind, which makes this
    the sharpest test of the fully discrete error machinery.
    """
    bvol = _volume_matrix(mesh, degree)
    g_half = _flux_matrix(mesh, degree, 0.5, 0.5)
    g_jump = _flux_matrix(mesh, degree, -1.0, 1.0)
    a = bvol + g_half
    mat = sp.bmat([[a, -0.5 * g_jump], [0.5 * g_jump, -a]], format="csr")
    return LinearOperator(mat, label="energy-conserving pair")


def dual_mesh(primal: Mesh1D) -> Mesh1D:
    """Staggered companion mesh whose cells connect consecutive primal
    cell centers (the last cell wraps to the first center shifted by one
    period)."""
    centers = primal.centers
    return Mesh1D(np.concatenate([centers, [centers[0] + primal.length]]))


def assemble_central_advection(
    primal: Mesh1D, degree: int, tau_max: float
) -> tuple[LinearOperator, Mesh1D]:
    """Central scheme for u_t + u_x = 0 on a primal/dual mesh pair.

    Both copies of the solution evolve; each equation integrates the
    other copy by parts over its own cells, evaluating it at the cell
    endpoints where it is single-valued (they are interior points of
    the other mesh), and relaxes toward it at rate 1/tau_max:

        <w_t, v>_primal = <chi - w, v>/tau_max + <chi, v'> + sum chi(x_i) [v]
        <chi_t, psi>_dual = <w - chi, psi>/tau_max + <w, psi'> + sum w(x_j) [psi]

    The transport part is exactly skew and the relaxation contributes
    -|w - chi|^2 / tau_max to the energy. Returns the operator on the
    stacked state [w, chi] and the dual mesh.
    """
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    dual = dual_mesh(primal)
    n_cells, k1 = primal.n_cells, degree + 1
    n = n_cells * k1
    length = primal.length

    xi, wts = gauss_rule(degree + 2)
    ptab = legendre_table(degree, xi, nderiv=1)

    def eval_basis(mesh: Mesh1D, cell: int, x: np.ndarray, nderiv: int = 0):
        """Scaled basis values (and derivatives) of one cell at physical
        points, shape (nderiv+1, k+1, len(x))."""
        h = mesh.widths[cell]
        c = mesh.centers[cell]
        local = legendre_table(degree, 2.0 * (x - c) / h, nderiv=nderiv)
        scale = np.sqrt((2 * np.arange(degree + 1) + 1.0) / h)
        out = local * scale[None, :, None]
        for d in range(1, nderiv + 1):
            out[d] *= (2.0 / h) ** d
        return out

    mass_blocks = []     # <chi, v> over primal cells: rows primal, cols dual
    cross_pd = []        # <chi, v'> over primal cells
    cross_dp = []        # <w, psi'> over dual cells
    for j in range(n_cells):
        jm = (j - 1) % n_cells
        lo, hi = primal.boundaries[j], primal.boundaries[j + 1]
        mid = primal.centers[j]
        for (a, b, dcell) in ((lo, mid, jm), (mid, hi, j)):
            pts = 0.5 * (a + b) + 0.5 * (b - a) * xi
            w_phys = 0.5 * (b - a) * wts
            ptest = eval_basis(primal, j, pts, nderiv=1)
            # dual coordinates may sit one period up (cell jm for j = 0)
            dual_pts = pts + (length if dcell == n_cells - 1 and j == 0 else 0.0)
            dtrial = eval_basis(dual, dcell, dual_pts)[0]
            mass_blocks.append(
                (j * k1, dcell * k1, np.einsum("q,aq,bq->ab", w_phys, ptest[0], dtrial))
            )
            cross_pd.append(
                (j * k1, dcell * k1, np.einsum("q,aq,bq->ab", w_phys, ptest[1], dtrial))
            )
    for jd in range(n_cells):
        jp = (jd + 1) % n_cells
        lo, hi = dual.boundaries[jd], dual.boundaries[jd + 1]
        mid = primal.boundaries[jd + 1]  # the primal interface inside this dual cell
        for (a, b, pcell) in ((lo, mid, jd), (mid, hi, jp)):
            pts = 0.5 * (a + b) + 0.5 * (b - a) * xi
            w_phys = 0.5 * (b - a) * wts
            dtest = eval_basis(dual, jd, pts, nderiv=1)
            prim_pts = pts - (length if pcell == 0 and jd == n_cells - 1 else 0.0)
            ptrial = eval_basis(primal, pcell, prim_pts)[0]
            cross_dp.append(
                (jd * k1, pcell * k1, np.einsum("q,aq,bq->ab", w_phys, dtest[1], ptrial))
            )

    mass = _coo_from_blocks(mass_blocks, n, n)
    c_pd = _coo_from_blocks(cross_pd, n, n)
    c_dp = _coo_from_blocks(cross_dp, n, n)

    # Point terms. chi at primal interfaces times the jump of v there:
    point_pd = []
    left_p, right_p = _trace_vectors(primal, degree)
    for i in range(n_cells):
        ip = (i + 1) % n_cells
        x = primal.boundaries[i + 1]  # interior to dual cell i
        chi_vals = eval_basis(dual, i, np.array([x]))[0][:, 0]
        point_pd.append((ip * k1, i * k1, np.outer(left_p[ip], chi_vals)))
        point_pd.append((i * k1, i * k1, -np.outer(right_p[i], chi_vals)))
    f_pd = _coo_from_blocks(point_pd, n, n)

    # w at primal centers times the jump of psi there. The center x_j is
    # the left endpoint of dual cell j and the right endpoint of dual
    # cell j-1.
    point_dp = []
    left_d, right_d = _trace_vectors(dual, degree)
    for j in range(n_cells):
        jm = (j - 1) % n_cells
        w_vals = eval_basis(primal, j, np.array([primal.centers[j]]))[0][:, 0]
        point_dp.append((j * k1, j * k1, np.outer(left_d[j], w_vals)))
        point_dp.append((jm * k1, j * k1, -np.outer(right_d[jm], w_vals)))
    f_dp = _coo_from_blocks(point_dp, n, n)

    eye = sp.identity(n, format="csr")
    inv_tau = 1.0 / tau_max
    top = [-inv_tau * eye, inv_tau * mass + c_pd + f_pd]
    bottom = [inv_tau * mass.T.tocsr() + c_dp + f_dp, -inv_tau * eye]
    mat = sp.bmat([[top[0], top[1]], [bottom[0], bottom[1]]], format="csr")
    return LinearOperator(mat, label=f"central[tau_max={tau_max:g}]"), dual


def stack_fields(*fields: DGFunction) -> np.ndarray:
    return np.concatenate([f.vector for f in fields])


def split_fields(vec: np.ndarray, meshes, degree: int) -> list[DGFunction]:
    out = []
    offset = 0
    for mesh in meshes:
        n = mesh.n_cells * (degree + 1)
        out.append(DGFunction.from_vector(mesh, degree, vec[offset : offset + n]))
        offset += n
    if offset != vec.size:
        raise ValueError("state vector length does not match the field layout")
    return out
