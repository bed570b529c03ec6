"""Study drivers for the discretizations in this package.

This module owns four jobs. It fixes a small catalog of closed-form
solutions together with the evolution operator each one satisfies; it
assembles one discrete problem per refinement level and marches it with
the requested integrator; it fits convergence rates and applies the
assertions a study declares; and it bundles the operator and projection
identity checks behind the command line verification tools.

Studies arrive as plain dictionaries in the "rkdg-lab-config/1" layout.
Validation is strict about unknown keys so that a typo in a config file
fails loudly instead of silently running with a default. All randomness
flows through seeds stored in the config, and parallel runs split work
per refinement level with results gathered by index, so a run with a
thread pool reproduces the serial output exactly.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core_fem import (
    TWO_PI,
    ConfigError,
    DGFunction,
    Mesh1D,
    NumericalError,
    SmoothFunction,
    l2_error,
    legendre_table,
    mean_value,
    project_l2,
)
from .dg_ops1d import (
    LinearOperator,
    assemble_d_theta,
    assemble_high_order_lh,
    assemble_ultraweak_third,
    check_high_order_admissible,
    high_order_flux_sequence,
    jump_energy,
    operator_norm,
    quadratic_form,
    semiboundedness_mu,
)
from .multidim import (
    DGFunction2D,
    Mesh2D,
    assemble_advection_2d,
    l2_error_2d,
    pi_tensor_2d,
    project_l2_2d,
    tensor_projection_residuals,
)
from .projections import (
    commuting_defect,
    composed_projection,
    d_theta_inverse_apply,
    d_theta_inverse_norm,
    make_mean_zero,
    pi_theta,
)
from .spectral import (
    FourierFunction,
    SymbolOperator,
    analytic_profile,
    fourier_truncate,
    grid_l2_error,
)
from .systems import (
    assemble_central_advection,
    assemble_energy_conserving_pair,
    assemble_wave_alphabeta,
    split_fields,
    stack_fields,
)
from .time_integration import (
    RKScheme,
    amplification_norm,
    evolve,
    expm_reference,
    resolve_scheme,
    sigma_factor,
)

SCHEMA_VERSION = "rkdg-lab-config/1"
REPORT_SCHEMA = "rkdg-lab-report/1"
DEFAULT_SEED = 1729
CSV_HEADER = "scale,error,rate_pairwise"
SCAN_CSV_HEADER = "lambda,tau,amplification,stable"

# Every evolution refuses to start unless the operator is semibounded to
# this tolerance, and refuses step counts past the budget below.
MU_GATE = 1.0e-8
STEP_BUDGET = 3_000_000

_RESIDUAL_GATE = 1.0e-10


class RateAssertionError(RuntimeError):
    """A fitted convergence rate violated a bound the study asserted."""


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedSolution:
    """A closed-form solution of u_t = L u on the periodic domain.

    components, time_derivatives and operator_actions hold one callable
    per field; the last two are written independently of each other so
    that manufactured_residual can cross-check them. profile exists for
    the scalar problems and maps a time to a SmoothFunction with enough
    x-derivatives for the structure-preserving projections. params pins
    the parts of the discretization that the solution identity fixes
    (the derivative order q and the sign beta, for instance) and
    supplies soft defaults for the rest.
    """

    name: str
    family: str
    dim: int
    components: tuple
    time_derivatives: tuple
    operator_actions: tuple
    profile: Callable | None = None
    params: Mapping[str, Any] = field(default_factory=dict)


def _trig(kind: str, speed: float, scale: float = 1.0, decay: float = 0.0) -> Callable:
    """Closure for scale * exp(-decay t) * sin/cos(x - speed t)."""
    base = np.sin if kind == "sin" else np.cos

    def f(x, t, base=base, speed=speed, scale=scale, decay=decay):
        amp = scale * np.exp(-decay * np.asarray(t, dtype=float))
        return amp * base(np.asarray(x, dtype=float) - speed * np.asarray(t, dtype=float))

    return f


def _zero_field(x, t):
    return np.zeros_like(np.asarray(x, dtype=float))


def _sine_profile(speed: float, decay: float = 0.0, offset: float = 0.0) -> Callable:
    """SmoothFunction factory for offset + exp(-decay t) sin(x - speed t).

    Derivatives in x are phase shifts of the sine, so any order up to
    eight is available exactly.
    """

    def at_time(t: float) -> SmoothFunction:
        amp = math.exp(-decay * t)
        phase = -speed * t
        fns = []
        for order in range(9):
            def g(x, amp=amp, phase=phase, order=order):
                vals = amp * np.sin(np.asarray(x, dtype=float) + phase + 0.5 * order * np.pi)
                if order == 0:
                    vals = vals + offset
                return vals

            fns.append(g)
        return SmoothFunction(tuple(fns))

    return at_time


def _profile_slope(x):
    """Derivative of the analytic benchmark profile 1 / (2 + cos x)."""
    x = np.asarray(x, dtype=float)
    return np.sin(x) / (2.0 + np.cos(x)) ** 2


def _plane_wave(x1, x2, t):
    return np.sin(np.asarray(x1, dtype=float) + np.asarray(x2, dtype=float) - 2.0 * t)


def _plane_wave_dt(x1, x2, t):
    return -2.0 * np.cos(np.asarray(x1, dtype=float) + np.asarray(x2, dtype=float) - 2.0 * t)


def _characteristic_pair(sign: float) -> Callable:
    """Component (p(x - t) + sign * p(x + t)) / 2 of the coupled system."""

    def f(x, t, sign=sign):
        x = np.asarray(x, dtype=float)
        return 0.5 * (analytic_profile(x - t) + sign * analytic_profile(x + t))

    return f


def _characteristic_pair_dt(sign: float) -> Callable:
    def f(x, t, sign=sign):
        x = np.asarray(x, dtype=float)
        return 0.5 * (-_profile_slope(x - t) + sign * _profile_slope(x + t))

    return f


def _characteristic_pair_action(sign: float) -> Callable:
    # L = -A d/dx with the exchange coupling swaps the components, so
    # the action on component 1 is minus the x-derivative of component 2
    # and vice versa.
    def f(x, t, sign=sign):
        x = np.asarray(x, dtype=float)
        return -0.5 * (_profile_slope(x - t) + sign * _profile_slope(x + t))

    return f


_COUPLINGS = {"exchange": np.array([[0.0, 1.0], [1.0, 0.0]])}


def _fill_thetas(q: int, theta0: float, thetas: Sequence[float]) -> tuple[float, ...]:
    """Default the paired flux parameters to copies of theta0."""
    if thetas:
        return tuple(thetas)
    return (theta0,) * (q // 2)


@lru_cache(maxsize=1)
def solution_catalog() -> Mapping[str, ManufacturedSolution]:
    """All manufactured solutions the studies know about, keyed by name."""
    entries = [
        ManufacturedSolution(
            name="advection_sin",
            family="ldg",
            dim=1,
            components=(_trig("sin", 1.0),),
            time_derivatives=(_trig("cos", 1.0, -1.0),),
            operator_actions=(_trig("cos", 1.0, -1.0),),
            profile=_sine_profile(1.0),
            params={"q": 1, "beta": -1.0, "theta0": 1.0},
        ),
        ManufacturedSolution(
            name="heat_sin",
            family="ldg",
            dim=1,
            components=(_trig("sin", 0.0, 1.0, 1.0),),
            time_derivatives=(_trig("sin", 0.0, -1.0, 1.0),),
            operator_actions=(_trig("sin", 0.0, -1.0, 1.0),),
            profile=_sine_profile(0.0, decay=1.0),
            params={"q": 2, "beta": 1.0, "theta0": 1.0},
        ),
        ManufacturedSolution(
            name="dispersive_sin",
            family="ldg",
            dim=1,
            components=(_trig("sin", -1.0),),
            time_derivatives=(_trig("cos", -1.0),),
            operator_actions=(_trig("cos", -1.0),),
            profile=_sine_profile(-1.0),
            params={"q": 3, "beta": -1.0, "theta0": 1.0},
        ),
        ManufacturedSolution(
            name="ultraweak_sin",
            family="ultraweak3",
            dim=1,
            components=(_trig("sin", 1.0),),
            time_derivatives=(_trig("cos", 1.0, -1.0),),
            operator_actions=(_trig("cos", 1.0, -1.0),),
            profile=_sine_profile(1.0),
            params={},
        ),
        ManufacturedSolution(
            name="wave_sin",
            family="wave",
            dim=1,
            components=(_trig("sin", 1.0), _trig("sin", 1.0, -1.0)),
            time_derivatives=(_trig("cos", 1.0, -1.0), _trig("cos", 1.0)),
            operator_actions=(_trig("cos", 1.0, -1.0), _trig("cos", 1.0)),
            params={},
        ),
        ManufacturedSolution(
            name="conserving_pair_sin",
            family="conserving_pair",
            dim=1,
            components=(_trig("sin", 1.0), _zero_field),
            time_derivatives=(_trig("cos", 1.0, -1.0), _zero_field),
            operator_actions=(_trig("cos", 1.0, -1.0), _zero_field),
            params={},
        ),
        ManufacturedSolution(
            name="central_sin",
            family="central",
            dim=1,
            components=(_trig("sin", 1.0), _trig("sin", 1.0)),
            time_derivatives=(_trig("cos", 1.0, -1.0), _trig("cos", 1.0, -1.0)),
            operator_actions=(_trig("cos", 1.0, -1.0), _trig("cos", 1.0, -1.0)),
            params={},
        ),
        ManufacturedSolution(
            name="advection2d_sin",
            family="advection2d",
            dim=2,
            components=(_plane_wave,),
            time_derivatives=(_plane_wave_dt,),
            operator_actions=(_plane_wave_dt,),
            params={"theta1": 1.0, "theta2": 1.0},
        ),
        ManufacturedSolution(
            name="spectral_exchange",
            family="spectral",
            dim=1,
            components=(_characteristic_pair(1.0), _characteristic_pair(-1.0)),
            time_derivatives=(_characteristic_pair_dt(1.0), _characteristic_pair_dt(-1.0)),
            operator_actions=(_characteristic_pair_action(-1.0), _characteristic_pair_action(1.0)),
            params={"coupling": "exchange"},
        ),
    ]
    return {entry.name: entry for entry in entries}


def manufactured_residual(
    solution: ManufacturedSolution, seed: int = DEFAULT_SEED, n_samples: int = 48
) -> float:
    """Largest pointwise defect |u_t - L u| over random space-time samples.

    The catalog writes u_t and L u as separate closures, so this is a
    real consistency check on both and it runs before every study.
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, TWO_PI, size=(solution.dim, n_samples))
    ts = rng.uniform(0.0, 1.0, size=n_samples)
    worst = 0.0
    for dudt, action in zip(solution.time_derivatives, solution.operator_actions):
        args = [xs[i] for i in range(solution.dim)] + [ts]
        defect = np.max(np.abs(np.asarray(dudt(*args)) - np.asarray(action(*args))))
        worst = max(worst, float(defect))
    return worst


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """One assembled refinement level: the operator plus data plumbing."""

    op: Any
    scale: float
    n_dofs: int
    meshes: tuple
    prepare: Callable  # t -> state array holding the projected exact data
    error: Callable  # (state, t) -> (total error, per-field errors)
    label: str
    extra: Mapping[str, Any] = field(default_factory=dict)


def _grid_mesh(grid: Mapping, n: int, seed: int, salt: int) -> Mesh1D:
    if grid.get("mesh", "uniform") == "perturbed":
        return Mesh1D.perturbed(n, rel=grid["perturbation"], seed=seed + 131 * salt + n)
    return Mesh1D.uniform(n)


def build_operator(
    scheme: Mapping, grid: Mapping, n: int, seed: int, salt: int = 0
) -> tuple[Any, tuple, float, Mapping]:
    """Assemble the operator for one level.

    Returns (operator, meshes, scale, extra). The scale is the mesh
    width for the grid-based families and the mode cutoff for the
    spectral one.
    """
    family = scheme["family"]
    if family == "spectral":
        a = _COUPLINGS[scheme["coupling"]]
        op = SymbolOperator(n, 1, (a,))
        return op, (), float(n), {}
    degree = scheme["degree"]
    if family == "advection2d":
        mesh2 = Mesh2D.uniform(n, n)
        op = assemble_advection_2d(mesh2, degree, scheme["theta1"], scheme["theta2"])
        return op, (mesh2,), float(mesh2.mesh1.h_max), {}
    mesh = _grid_mesh(grid, n, seed, salt)
    if family == "ldg":
        op = assemble_high_order_lh(
            mesh, degree, scheme["q"], scheme["beta"],
            theta0=scheme["theta0"], thetas=tuple(scheme["thetas"]),
        )
        return op, (mesh,), float(mesh.h_max), {}
    if family == "ultraweak3":
        op = assemble_ultraweak_third(mesh, degree)
        return op, (mesh,), float(mesh.h_max), {}
    if family == "wave":
        beta1, beta2 = scheme["beta1"], scheme["beta2"]
        pert = scheme.get("flux_perturbation")
        if pert is not None:
            radicand = (
                0.25 + pert["amplitude"] * mesh.h_max ** pert["exponent"]
                - scheme["alpha"] ** 2
            )
            if radicand < 0.0:
                raise ConfigError(
                    "scheme.flux_perturbation: alpha^2 exceeds 1/4 plus the "
                    "perturbation, so the dissipative branch is empty"
                )
            beta1 = beta2 = -math.sqrt(radicand)
        op = assemble_wave_alphabeta(mesh, degree, scheme["alpha"], beta1, beta2)
        return op, (mesh, mesh), float(mesh.h_max), {"beta1": beta1, "beta2": beta2}
    if family == "conserving_pair":
        op = assemble_energy_conserving_pair(mesh, degree)
        return op, (mesh, mesh), float(mesh.h_max), {}
    if family == "central":
        tau_max = scheme["tau_max_factor"] * mesh.h_min
        op, dual = assemble_central_advection(mesh, degree, tau_max)
        return op, (mesh, dual), float(mesh.h_max), {"tau_max": tau_max}
    raise ConfigError(f"scheme.family: unknown family {family!r}")


def build_problem(
    config: Mapping, solution: ManufacturedSolution, n: int, salt: int = 0
) -> Problem:
    """Assemble one level and wire the exact solution to it."""
    scheme, grid, init = config["scheme"], config["grid"], config.get("init", {})
    mode = init.get("mode", "l2")
    op, meshes, scale, extra = build_operator(scheme, grid, n, config["seed"], salt)
    family = scheme["family"]
    comps = solution.components

    if family == "spectral":
        def stacked(t: float) -> Callable:
            def f(x, t=t):
                return np.stack(
                    [np.asarray(c(x, t), dtype=complex) for c in comps], axis=-1
                )

            return f

        def prepare(t: float = 0.0):
            return fourier_truncate(stacked(t), n, dim=1, n_components=len(comps)).coeffs

        def error(state, t: float):
            u = FourierFunction(n, 1, np.asarray(state))
            e = grid_l2_error(u, stacked(t))
            return e, {"all": e}

        n_dofs = (2 * n + 1) * len(comps)
        return Problem(op, scale, n_dofs, meshes, prepare, error, f"n_max={n}", extra)

    degree = scheme["degree"]
    if family == "advection2d":
        mesh2 = meshes[0]

        def slice_2d(t: float) -> Callable:
            return lambda x1, x2, t=t: comps[0](x1, x2, t)

        def prepare(t: float = 0.0):
            f = slice_2d(t)
            if mode == "tensor":
                u = pi_tensor_2d(
                    f, mesh2, degree, scheme["theta1"], scheme["theta2"], npts=degree + 4
                )
            else:
                u = project_l2_2d(f, mesh2, degree, npts=degree + 4)
            return u.vector

        def error(state, t: float):
            u = DGFunction2D.from_vector(mesh2, degree, np.asarray(state))
            e = l2_error_2d(u, slice_2d(t), npts=degree + 5)
            return e, {"u": e}

        return Problem(op, scale, op.n, meshes, prepare, error, f"{n}x{n}", extra)

    if family in ("wave", "conserving_pair", "central"):
        names = ("w", "chi")

        def prepare(t: float = 0.0):
            fields = [
                project_l2(lambda x, c=c, t=t: c(x, t), m, degree, npts=degree + 6)
                for c, m in zip(comps, meshes)
            ]
            return stack_fields(*fields)

        def error(state, t: float):
            fields = split_fields(np.asarray(state), list(meshes), degree)
            errs = [
                l2_error(u, lambda x, c=c, t=t: c(x, t), npts=degree + 6)
                for u, c in zip(fields, comps)
            ]
            total = float(math.sqrt(sum(e * e for e in errs)))
            return total, dict(zip(names, errs))

        return Problem(op, scale, op.n, meshes, prepare, error, f"n={n}", extra)

    # Scalar problems on a single mesh (ldg and the ultra-weak form).
    mesh = meshes[0]

    def prepare(t: float = 0.0):
        if mode == "composed":
            u = composed_projection(
                solution.profile(t), mesh, degree, scheme["q"],
                theta0=scheme["theta0"], thetas=tuple(scheme["thetas"]),
                variant=init.get("variant", "direct"), npts=degree + 8,
            )
        else:
            u = project_l2(solution.profile(t), mesh, degree, npts=degree + 6)
        return u.vector

    def error(state, t: float):
        u = DGFunction.from_vector(mesh, degree, np.asarray(state))
        e = l2_error(u, lambda x, t=t: comps[0](x, t), npts=degree + 6)
        return e, {"u": e}

    return Problem(op, scale, op.n, meshes, prepare, error, f"n={n}", extra)


def _op_norm(op) -> float:
    if isinstance(op, SymbolOperator):
        return float(op.norm())
    return operator_norm(op)


def _mu_value(op) -> float:
    """Semiboundedness constant, branching on the operator representation."""
    if isinstance(op, SymbolOperator):
        m = op.n_components
        flat = op.symbols.reshape(-1, m, m)
        herm = 0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2)))
        return float(np.max(np.linalg.eigvalsh(herm)))
    return semiboundedness_mu(op)


# ---------------------------------------------------------------------------
# Step size policy
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _ray_extent(alphas: tuple, angle_deg: int, cap: float = 12.0) -> float:
    """Largest t with |R(t e^{i angle})| <= 1 + 1e-12, by scan and bisection."""
    direction = complex(np.exp(1j * np.deg2rad(angle_deg)))

    def inside(t: float) -> bool:
        z = t * direction
        r = complex(alphas[-1])
        for a in alphas[-2::-1]:
            r = a + z * r
        return abs(r) <= 1.0 + 1e-12

    grid = np.linspace(0.0, cap, 4801)
    last_good = 0.0
    hit_boundary = False
    for t in grid[1:]:
        if inside(float(t)):
            last_good = float(t)
        else:
            hit_boundary = True
            break
    if not hit_boundary:
        return float(cap)
    lo, hi = last_good, last_good + float(grid[1])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return lo


def stability_budget(scheme: RKScheme) -> float:
    """Conservative bound on tau * |L| for semibounded operators.

    Takes the smallest usable stability-region extent over rays from
    the imaginary axis to the negative real axis. A ray the scheme does
    not cover, or covers only within the boundary tolerance (forward
    Euler on the imaginary axis grazes it out to sqrt(2e-12), say), is
    skipped; a scheme covering no ray cannot be stepped stably at any
    size and is rejected.
    """
    extents = [_ray_extent(scheme.alphas, phi) for phi in (90, 120, 135, 150, 180)]
    positive = [e for e in extents if e > 1e-2]
    if not positive:
        raise NumericalError(
            f"integrator {scheme.name} has no usable stability region"
        )
    return min(positive)


def _tau_exponent(config: Mapping, scheme: RKScheme) -> int:
    tcfg = config["time"]
    if tcfg.get("tau_exponent") is not None:
        return int(tcfg["tau_exponent"])
    family = config["scheme"]["family"]
    q_eff = config["scheme"].get("q", 3 if family == "ultraweak3" else 1)
    degree = config["scheme"].get("degree", 1)
    return max(q_eff, math.ceil((degree + 1) / scheme.order))


def _spatial_taus(
    config: Mapping, problems: Sequence[Problem], norms: Sequence[float], scheme: RKScheme
) -> tuple[list[float], float, int | None]:
    """Step sizes tau_j = c * h_j^e with one shared constant.

    The constant is fixed so the worst level exhausts exactly the
    requested fraction of the stability budget; every other level then
    sits strictly inside it. An explicit time.tau overrides the policy.
    """
    tcfg = config["time"]
    budget = stability_budget(scheme)
    if tcfg.get("tau") is not None:
        taus = [float(tcfg["tau"])] * len(problems)
        expo = None
    else:
        expo = _tau_exponent(config, scheme)
        cap = tcfg["cfl_fraction"] * budget
        c = min(cap / (p.scale**expo * nrm) for p, nrm in zip(problems, norms))
        taus = [c * p.scale**expo for p in problems]
    for p, tau in zip(problems, taus):
        if tcfg["t_final"] / tau > STEP_BUDGET:
            raise NumericalError(
                f"level {p.label} would need {tcfg['t_final'] / tau:.2e} steps; "
                "shorten t_final or coarsen the study"
            )
    return taus, budget, expo


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


def fit_loglog(scales: Sequence[float], errors: Sequence[float]) -> tuple[float, list]:
    """Least-squares slope of log error against log scale, plus the
    pairwise rates between consecutive levels (None for the first)."""
    x = np.log(np.asarray(scales, dtype=float))
    y = np.log(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    pairwise: list = [None]
    for i in range(1, len(x)):
        pairwise.append(float((y[i] - y[i - 1]) / (x[i] - x[i - 1])))
    return slope, pairwise


def fit_semilog(scales: Sequence[float], errors: Sequence[float]) -> tuple[float, list]:
    """Slope of log error against the raw scale, for geometric decay."""
    x = np.asarray(scales, dtype=float)
    y = np.log(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    pairwise: list = [None]
    for i in range(1, len(x)):
        pairwise.append(float((y[i] - y[i - 1]) / (x[i] - x[i - 1])))
    return slope, pairwise


# ---------------------------------------------------------------------------
# Study results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelResult:
    scale: float
    n_dofs: int
    tau: float
    n_steps: int
    error: float
    components: Mapping[str, float]
    mu: float
    op_norm: float
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class StudyResult:
    study: str
    name: str
    config: Mapping
    levels: tuple
    fitted_rate: float | None
    pairwise: tuple
    assertions: Mapping
    passed: bool | None
    flags: tuple
    meta: Mapping
    rows: tuple = ()


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _assert_rates(report: Mapping, fitted: float, spectral: bool) -> tuple[Mapping, bool | None]:
    checks = {}
    if spectral:
        bound = report.get("assert_slope_max")
        if bound is not None:
            checks["slope_max"] = {
                "bound": float(bound), "value": fitted, "passed": bool(fitted <= bound)
            }
    else:
        low = report.get("assert_rate_min")
        if low is not None:
            checks["rate_min"] = {
                "bound": float(low), "value": fitted, "passed": bool(fitted >= low)
            }
        high = report.get("assert_rate_max")
        if high is not None:
            checks["rate_max"] = {
                "bound": float(high), "value": fitted, "passed": bool(fitted <= high)
            }
    passed = all(c["passed"] for c in checks.values()) if checks else None
    return checks, passed


def _resolve_solution(config: Mapping) -> ManufacturedSolution:
    solution = solution_catalog()[config["solution"]]
    defect = manufactured_residual(solution, seed=config["seed"])
    if defect > _RESIDUAL_GATE:
        raise NumericalError(
            f"manufactured solution {solution.name} fails its own consistency "
            f"check: |u_t - L u| reaches {defect:.3e} at random samples"
        )
    return solution


def _gate_mu(problem: Problem, mu: float) -> None:
    if mu > MU_GATE:
        raise NumericalError(
            f"operator at level {problem.label} is not semibounded "
            f"(mu = {mu:.3e}); refusing to march it"
        )


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


def run_spatial(config: Mapping, *, jobs: int = 1, strict_cfl: bool = False) -> StudyResult:
    config = validate_config(config, expect_study="spatial")
    solution = _resolve_solution(config)
    scheme = resolve_scheme(config["time"]["integrator"])
    levels = config["grid"]["levels"]
    spectral = config["scheme"]["family"] == "spectral"
    t_final = config["time"]["t_final"]

    problems = [build_problem(config, solution, n, salt=i) for i, n in enumerate(levels)]
    norms = _parallel_map(lambda p: _op_norm(p.op), problems, jobs)
    mus = _parallel_map(lambda p: _mu_value(p.op), problems, jobs)
    for problem, mu in zip(problems, mus):
        _gate_mu(problem, mu)
    taus, budget, expo = _spatial_taus(config, problems, norms, scheme)

    def run_level(i: int) -> LevelResult:
        problem = problems[i]
        state0 = problem.prepare(0.0)
        marched = evolve(
            problem.op, state0, taus[i], t_final, scheme,
            cfl_limit=budget, op_norm=norms[i], strict_cfl=strict_cfl,
        )
        total, parts = problem.error(marched.state, t_final)
        return LevelResult(
            scale=problem.scale, n_dofs=problem.n_dofs, tau=taus[i],
            n_steps=marched.n_steps, error=total,
            components={k: float(v) for k, v in parts.items()},
            mu=float(mus[i]), op_norm=float(norms[i]),
            extra=dict(problem.extra),
        )

    level_results = _parallel_map(run_level, list(range(len(problems))), jobs)
    scales = [lv.scale for lv in level_results]
    errors = [lv.error for lv in level_results]
    fitted, pairwise = (fit_semilog if spectral else fit_loglog)(scales, errors)
    assertions, passed = _assert_rates(config.get("report", {}), fitted, spectral)
    meta = {
        "manufactured_residual": manufactured_residual(solution, seed=config["seed"]),
        "cfl_budget": budget,
        "tau_exponent": expo,
        "integrator": scheme.name,
    }
    return StudyResult(
        study="spatial", name=config["name"], config=config,
        levels=tuple(level_results), fitted_rate=fitted, pairwise=tuple(pairwise),
        assertions=assertions, passed=passed, flags=(), meta=meta,
    )


def run_temporal(config: Mapping, *, jobs: int = 1, strict_cfl: bool = False) -> StudyResult:
    config = validate_config(config, expect_study="temporal")
    solution = _resolve_solution(config)
    scheme = resolve_scheme(config["time"]["integrator"])
    tcfg = config["time"]
    t_final, mode = tcfg["t_final"], tcfg["mode"]

    problem = build_problem(config, solution, config["grid"]["n"])
    mu = _mu_value(problem.op)
    _gate_mu(problem, mu)
    nrm = _op_norm(problem.op)
    budget = stability_budget(scheme)

    # Halved steps, each snapped so it divides the horizon exactly.
    taus = []
    for i in range(tcfg["halvings"] + 1):
        raw = tcfg["tau0"] / 2**i
        n_steps = max(1, round(t_final / raw))
        if n_steps > STEP_BUDGET:
            raise NumericalError("temporal study exceeds the step budget")
        taus.append(t_final / n_steps)

    state0 = problem.prepare(0.0)
    reference = expm_reference(problem.op, t_final) @ state0
    floor = problem.error(reference, t_final)[0] if mode == "pde" else 0.0

    def run_one(tau: float) -> LevelResult:
        marched = evolve(
            problem.op, state0, tau, t_final, scheme,
            cfl_limit=budget, op_norm=nrm, strict_cfl=strict_cfl,
        )
        rho = (
            amplification_norm(problem.op, scheme, tau)
            if problem.n_dofs <= 2000 else float("nan")
        )
        extra = {"amplification": float(rho)}
        if mode == "pde":
            raw, parts = problem.error(marched.state, t_final)
            adjusted = max(abs(raw - floor), 1e-16)
            extra.update({"raw_error": float(raw), "floor": float(floor)})
            err, comps = adjusted, parts
        else:
            err = float(np.linalg.norm(np.asarray(marched.state) - reference))
            comps = {"semidiscrete_gap": err}
        return LevelResult(
            scale=tau, n_dofs=problem.n_dofs, tau=tau, n_steps=marched.n_steps,
            error=float(err), components={k: float(v) for k, v in comps.items()},
            mu=float(mu), op_norm=float(nrm), extra=extra,
        )

    level_results = _parallel_map(run_one, taus, jobs)
    flags = []
    if mode == "pde":
        smallest_raw = min(lv.extra["raw_error"] for lv in level_results)
        if floor > 0.2 * smallest_raw:
            flags.append(
                "semidiscrete floor exceeds 20 percent of the smallest raw "
                "error; reported errors are floor-subtracted"
            )
    for lv in level_results:
        if np.isfinite(lv.extra["amplification"]) and lv.extra["amplification"] > 1 + 1e-3:
            flags.append(f"amplification {lv.extra['amplification']:.6f} at tau {lv.tau:.3e}")

    fitted, pairwise = fit_loglog([lv.scale for lv in level_results],
                                  [lv.error for lv in level_results])
    assertions, passed = _assert_rates(config.get("report", {}), fitted, False)
    meta = {
        "mode": mode,
        "floor": float(floor),
        "operator_norm": float(nrm),
        "integrator": scheme.name,
        "manufactured_residual": manufactured_residual(solution, seed=config["seed"]),
    }
    return StudyResult(
        study="temporal", name=config["name"], config=config,
        levels=tuple(level_results), fitted_rate=fitted, pairwise=tuple(pairwise),
        assertions=assertions, passed=passed, flags=tuple(flags), meta=meta,
    )


def run_stability(config: Mapping, *, jobs: int = 1) -> StudyResult:
    config = validate_config(config, expect_study="stability")
    scheme = resolve_scheme(config["time"]["integrator"])
    scan = config["scan"]
    op, _, _, _ = build_operator(
        config["scheme"], config["grid"], config["grid"]["n"], config["seed"]
    )
    nrm = _op_norm(op)

    def probe(lam: float) -> Mapping:
        tau = lam / nrm
        rho = amplification_norm(op, scheme, tau)
        return {
            "lambda": float(lam),
            "tau": float(tau),
            "amplification": float(rho),
            "stable": bool(rho <= 1.0 + scan["tolerance"]),
        }

    rows = _parallel_map(probe, scan["lambdas"], jobs)
    stable = [row["lambda"] for row in rows if row["stable"]]
    expect = scan.get("expect")
    assertions = {}
    passed = None
    if expect == "empty":
        passed = not stable
        assertions["expect_empty"] = {"bound": 0, "value": len(stable), "passed": passed}
    elif expect == "nonempty":
        passed = bool(stable)
        assertions["expect_nonempty"] = {"bound": 1, "value": len(stable), "passed": passed}
    meta = {
        "operator_norm": float(nrm),
        "integrator": scheme.name,
        "stable_count": len(stable),
        "max_stable_lambda": max(stable) if stable else None,
    }
    return StudyResult(
        study="stability", name=config["name"], config=config, levels=(),
        fitted_rate=None, pairwise=(), assertions=assertions, passed=passed,
        flags=(), meta=meta, rows=tuple(rows),
    )


def run_study(config: Mapping, *, jobs: int = 1, strict_cfl: bool = False) -> StudyResult:
    """Validate and dispatch a study configuration."""
    config = validate_config(config)
    if config["study"] == "spatial":
        return run_spatial(config, jobs=jobs, strict_cfl=strict_cfl)
    if config["study"] == "temporal":
        return run_temporal(config, jobs=jobs, strict_cfl=strict_cfl)
    return run_stability(config, jobs=jobs)


# ---------------------------------------------------------------------------
# Configuration validation
# ---------------------------------------------------------------------------

_FAMILIES = (
    "ldg", "ultraweak3", "wave", "conserving_pair", "central",
    "advection2d", "spectral",
)

# Parameters a manufactured solution pins outright. Everything else in
# solution.params is a soft default the config may override.
_PINNED = ("q", "beta", "coupling")

_SCHEME_KEYS = {
    "ldg": {"family", "degree", "q", "beta", "theta0", "thetas"},
    "ultraweak3": {"family", "degree"},
    "wave": {"family", "degree", "alpha", "beta1", "beta2", "flux_perturbation"},
    "conserving_pair": {"family", "degree"},
    "central": {"family", "degree", "tau_max_factor"},
    "advection2d": {"family", "degree", "theta1", "theta2"},
    "spectral": {"family", "coupling"},
}

_FIELD_COUNT = {
    "ldg": 1, "ultraweak3": 1, "wave": 2, "conserving_pair": 2,
    "central": 2, "spectral": 2,
}


def _fail(path: str, message: str) -> None:
    raise ConfigError(f"{path}: {message}" if path else message)


def _check_keys(path: str, doc: Mapping, allowed: set) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        _fail(path or "config", f"unknown key(s) {unknown}; allowed keys are {sorted(allowed)}")


def _as_mapping(value, path: str) -> Mapping:
    if not isinstance(value, Mapping):
        _fail(path, "expected an object")
    return value


def _as_str(value, path: str, options: Sequence[str] | None = None) -> str:
    if not isinstance(value, str) or not value:
        _fail(path, "expected a nonempty string")
    if options is not None and value not in options:
        _fail(path, f"expected one of {sorted(options)}, got {value!r}")
    return value


def _as_int(value, path: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer")
    if lo is not None and value < lo:
        _fail(path, f"must be at least {lo}")
    if hi is not None and value > hi:
        _fail(path, f"must be at most {hi}")
    return int(value)


def _as_float(
    value, path: str, lo: float | None = None, hi: float | None = None,
    lo_open: bool = False,
) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, "expected a number")
    v = float(value)
    if not np.isfinite(v):
        _fail(path, "must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        _fail(path, f"must be {'greater than' if lo_open else 'at least'} {lo}")
    if hi is not None and v > hi:
        _fail(path, f"must be at most {hi}")
    return v


def _validate_scheme(raw: Mapping, solution: ManufacturedSolution | None, study: str) -> dict:
    raw = _as_mapping(raw, "scheme")
    if "family" not in raw:
        _fail("scheme", "missing required key 'family'")
    family = _as_str(raw["family"], "scheme.family", _FAMILIES)

    merged = dict(raw)
    if solution is not None:
        if solution.family != family:
            _fail("scheme.family", (
                f"solution {solution.name!r} belongs to family "
                f"{solution.family!r}, not {family!r}"
            ))
        for key, val in solution.params.items():
            if key in _PINNED and key in merged:
                given = merged[key]
                same = (
                    given == val if isinstance(val, (int, str))
                    else abs(float(given) - float(val)) <= 1e-12
                )
                if not same:
                    _fail(f"scheme.{key}", (
                        f"solution {solution.name!r} pins this to {val!r}; "
                        "drop the key or pick another solution"
                    ))
            merged.setdefault(key, val)

    _check_keys("scheme", merged, _SCHEME_KEYS[family])
    out: dict = {"family": family}
    if family != "spectral":
        if "degree" not in merged:
            _fail("scheme.degree", "missing required key")
        out["degree"] = _as_int(merged["degree"], "scheme.degree", 0, 8)

    if family == "ldg":
        for key in ("q", "beta"):
            if key not in merged:
                _fail(f"scheme.{key}", "missing required key (no solution supplies it)")
        out["q"] = _as_int(merged["q"], "scheme.q", 1, 4)
        out["beta"] = _as_float(merged["beta"], "scheme.beta")
        out["theta0"] = _as_float(merged.get("theta0", 1.0), "scheme.theta0")
        thetas = merged.get("thetas", [])
        if not isinstance(thetas, (list, tuple)):
            _fail("scheme.thetas", "expected a list of flux parameters")
        out["thetas"] = list(_fill_thetas(
            out["q"], out["theta0"],
            [_as_float(t, f"scheme.thetas[{i}]") for i, t in enumerate(thetas)],
        ))
        try:
            check_high_order_admissible(out["q"], out["beta"], out["theta0"])
            high_order_flux_sequence(out["q"], out["theta0"], tuple(out["thetas"]))
        except ValueError as exc:
            _fail("scheme", str(exc))
    elif family == "wave":
        out["alpha"] = _as_float(merged.get("alpha", 0.5), "scheme.alpha", -2.0, 2.0)
        out["beta1"] = _as_float(merged.get("beta1", 0.0), "scheme.beta1", hi=0.0)
        out["beta2"] = _as_float(merged.get("beta2", 0.0), "scheme.beta2", hi=0.0)
        pert = merged.get("flux_perturbation")
        if pert is not None:
            pert = _as_mapping(pert, "scheme.flux_perturbation")
            _check_keys("scheme.flux_perturbation", pert, {"amplitude", "exponent"})
            for key in ("amplitude", "exponent"):
                if key not in pert:
                    _fail(f"scheme.flux_perturbation.{key}", "missing required key")
            out["flux_perturbation"] = {
                "amplitude": _as_float(
                    pert["amplitude"], "scheme.flux_perturbation.amplitude", 0.0, lo_open=True
                ),
                "exponent": _as_float(
                    pert["exponent"], "scheme.flux_perturbation.exponent", 0.0, lo_open=True
                ),
            }
    elif family == "central":
        out["tau_max_factor"] = _as_float(
            merged.get("tau_max_factor", 0.35), "scheme.tau_max_factor", 0.0, 10.0,
            lo_open=True,
        )
    elif family == "advection2d":
        out["theta1"] = _as_float(merged.get("theta1", 1.0), "scheme.theta1", 0.5, 1.5)
        out["theta2"] = _as_float(merged.get("theta2", 1.0), "scheme.theta2", 0.5, 1.5)
    elif family == "spectral":
        out["coupling"] = _as_str(
            merged.get("coupling", "exchange"), "scheme.coupling", sorted(_COUPLINGS)
        )
    return out


def _validate_grid(raw: Mapping, family: str, study: str) -> dict:
    raw = _as_mapping(raw, "grid")
    out: dict = {}
    if study == "spatial":
        _check_keys("grid", raw, {"levels", "mesh", "perturbation"})
        if "levels" not in raw:
            _fail("grid.levels", "missing required key")
        levels = raw["levels"]
        if not isinstance(levels, (list, tuple)) or len(levels) < 2:
            _fail("grid.levels", "expected a list with at least two entries")
        cap = {"advection2d": 64, "spectral": 96}.get(family, 1024)
        out["levels"] = [
            _as_int(n, f"grid.levels[{i}]", 2, cap) for i, n in enumerate(levels)
        ]
        if any(b <= a for a, b in zip(out["levels"], out["levels"][1:])):
            _fail("grid.levels", "entries must increase strictly")
    else:
        _check_keys("grid", raw, {"n", "mesh", "perturbation"})
        if "n" not in raw:
            _fail("grid.n", "missing required key")
        out["n"] = _as_int(raw["n"], "grid.n", 2, 2048)

    mesh = _as_str(raw.get("mesh", "uniform"), "grid.mesh", ("uniform", "perturbed"))
    if mesh == "perturbed" and family in ("advection2d", "spectral"):
        _fail("grid.mesh", f"the {family} family runs on uniform grids only")
    out["mesh"] = mesh
    if "perturbation" in raw:
        if mesh != "perturbed":
            _fail("grid.perturbation", "only meaningful when grid.mesh is 'perturbed'")
        out["perturbation"] = _as_float(
            raw["perturbation"], "grid.perturbation", 0.0, 0.45, lo_open=True
        )
    elif mesh == "perturbed":
        out["perturbation"] = 0.2
    return out


def _validate_integrator(spec, path: str):
    if isinstance(spec, (list, tuple)):
        coeffs = [_as_float(a, f"{path}[{i}]") for i, a in enumerate(spec)]
        spec = coeffs
    elif not isinstance(spec, str):
        _fail(path, "expected an integrator name or a list of Taylor coefficients")
    try:
        resolve_scheme(spec)
    except (KeyError, ValueError, TypeError) as exc:
        _fail(path, str(exc))
    return spec


def _validate_time(raw: Mapping, family: str, study: str) -> dict:
    raw = _as_mapping(raw, "time")
    out: dict = {}
    if study == "spatial":
        _check_keys("time", raw, {"integrator", "t_final", "cfl_fraction", "tau", "tau_exponent"})
        out["integrator"] = _validate_integrator(raw.get("integrator", "ssp3"), "time.integrator")
        out["t_final"] = _as_float(raw.get("t_final", 1.0), "time.t_final", 0.0, 100.0, lo_open=True)
        out["cfl_fraction"] = _as_float(
            raw.get("cfl_fraction", 0.9), "time.cfl_fraction", 0.0, 1.0, lo_open=True
        )
        if "tau" in raw:
            out["tau"] = _as_float(raw["tau"], "time.tau", 0.0, 10.0, lo_open=True)
        elif family == "spectral":
            _fail("time.tau", "spectral studies step with a fixed tau; set one")
        if "tau_exponent" in raw:
            out["tau_exponent"] = _as_int(raw["tau_exponent"], "time.tau_exponent", 1, 8)
    elif study == "temporal":
        _check_keys("time", raw, {"integrator", "t_final", "tau0", "halvings", "mode"})
        if "integrator" not in raw:
            _fail("time.integrator", "missing required key")
        out["integrator"] = _validate_integrator(raw["integrator"], "time.integrator")
        out["t_final"] = _as_float(raw.get("t_final", 1.0), "time.t_final", 0.0, 100.0, lo_open=True)
        if "tau0" not in raw:
            _fail("time.tau0", "missing required key")
        out["tau0"] = _as_float(raw["tau0"], "time.tau0", 0.0, 10.0, lo_open=True)
        out["halvings"] = _as_int(raw.get("halvings", 5), "time.halvings", 1, 12)
        out["mode"] = _as_str(raw.get("mode", "pde"), "time.mode", ("pde", "semidiscrete"))
    else:
        _check_keys("time", raw, {"integrator"})
        if "integrator" not in raw:
            _fail("time.integrator", "missing required key")
        out["integrator"] = _validate_integrator(raw["integrator"], "time.integrator")
    return out


def _validate_init(raw: Mapping, scheme: Mapping, study: str) -> dict:
    raw = _as_mapping(raw, "init")
    _check_keys("init", raw, {"mode", "variant"})
    mode = _as_str(raw.get("mode", "l2"), "init.mode", ("l2", "composed", "tensor"))
    family = scheme["family"]
    out = {"mode": mode}
    if mode == "composed":
        if family != "ldg":
            _fail("init.mode", "the composed projection applies to the ldg family only")
        seq = high_order_flux_sequence(scheme["q"], scheme["theta0"], tuple(scheme["thetas"]))
        if any(abs(t - 0.5) < 1e-3 for t in seq):
            _fail("init.mode", (
                "composed initial data needs every flux parameter away from "
                "1/2; adjust theta0/thetas or use mode 'l2'"
            ))
        variant = _as_str(raw.get("variant", "direct"), "init.variant", ("direct", "reduced"))
        if variant == "reduced" and scheme["degree"] < 1:
            _fail("init.variant", "the reduced construction needs degree >= 1")
        out["variant"] = variant
    else:
        if "variant" in raw:
            _fail("init.variant", "only meaningful when init.mode is 'composed'")
        if mode == "tensor" and family != "advection2d":
            _fail("init.mode", "tensor initial data applies to the advection2d family only")
    return out


def _validate_report(raw: Mapping, family: str, study: str) -> dict:
    raw = _as_mapping(raw, "report")
    _check_keys("report", raw, {"assert_rate_min", "assert_rate_max", "assert_slope_max"})
    out: dict = {}
    spectral = family == "spectral"
    for key in ("assert_rate_min", "assert_rate_max"):
        if key in raw:
            if spectral:
                _fail(f"report.{key}", "spectral studies assert through assert_slope_max")
            out[key] = _as_float(raw[key], f"report.{key}", -64.0, 64.0)
    if "assert_slope_max" in raw:
        if not spectral:
            _fail("report.assert_slope_max", "only spectral studies fit a semilog slope")
        out["assert_slope_max"] = _as_float(raw["assert_slope_max"], "report.assert_slope_max", -64.0, 64.0)
    return out


def _validate_scan(raw: Mapping) -> dict:
    raw = _as_mapping(raw, "scan")
    _check_keys("scan", raw, {"lambdas", "tolerance", "expect"})
    lambdas = raw.get("lambdas", [round(0.2 * i, 10) for i in range(1, 16)])
    if not isinstance(lambdas, (list, tuple)) or not lambdas:
        _fail("scan.lambdas", "expected a nonempty list of positive numbers")
    if len(lambdas) > 200:
        _fail("scan.lambdas", "at most 200 scan points")
    out = {
        "lambdas": [
            _as_float(v, f"scan.lambdas[{i}]", 0.0, 64.0, lo_open=True)
            for i, v in enumerate(lambdas)
        ],
        "tolerance": _as_float(raw.get("tolerance", 1e-10), "scan.tolerance", 0.0, 1e-6, lo_open=True),
    }
    if raw.get("expect") is not None:
        out["expect"] = _as_str(raw["expect"], "scan.expect", ("empty", "nonempty"))
    return out


def _dof_estimate(scheme: Mapping, n: int) -> int:
    family = scheme["family"]
    if family == "spectral":
        return (2 * n + 1) * 2
    k1 = scheme["degree"] + 1
    if family == "advection2d":
        return n * n * k1 * k1
    return _FIELD_COUNT[family] * n * k1


def validate_config(doc: Mapping, expect_study: str | None = None) -> dict:
    """Check a raw study description and return it with defaults filled.

    Unknown keys anywhere in the document are errors, as are values the
    assemblers would reject later. The result is JSON-serializable and
    revalidates to itself.
    """
    doc = _as_mapping(doc, "config")
    _check_keys(
        "config", doc,
        {"schema", "name", "study", "seed", "description", "solution",
         "scheme", "grid", "time", "init", "report", "scan"},
    )
    if "schema" not in doc:
        _fail("schema", "missing required key")
    schema = _as_str(doc["schema"], "schema")
    if schema != SCHEMA_VERSION:
        _fail("schema", f"unsupported value {schema!r}; this build reads {SCHEMA_VERSION!r}")
    if "study" not in doc:
        _fail("study", "missing required key")
    study = _as_str(doc["study"], "study", ("spatial", "temporal", "stability"))
    if expect_study is not None and study != expect_study:
        _fail("study", f"expected a {expect_study} study, got {study!r}")

    out: dict = {"schema": schema, "study": study}
    out["name"] = _as_str(doc.get("name", study), "name")
    out["seed"] = _as_int(doc.get("seed", DEFAULT_SEED), "seed", 0)
    if "description" in doc:
        out["description"] = _as_str(doc["description"], "description")

    catalog = solution_catalog()
    solution = None
    if "solution" in doc:
        name = _as_str(doc["solution"], "solution")
        if name not in catalog:
            _fail("solution", f"unknown solution {name!r}; available: {sorted(catalog)}")
        solution = catalog[name]
        out["solution"] = name
    elif study != "stability":
        _fail("solution", "missing required key (stability scans may omit it)")

    if "scheme" not in doc:
        _fail("scheme", "missing required key")
    out["scheme"] = _validate_scheme(doc["scheme"], solution, study)
    family = out["scheme"]["family"]

    if "grid" not in doc:
        _fail("grid", "missing required key")
    out["grid"] = _validate_grid(doc["grid"], family, study)
    out["time"] = _validate_time(doc.get("time", {}), family, study)

    if study == "stability":
        for key in ("init", "report"):
            if key in doc:
                _fail(key, "stability scans assert through scan.expect, not this section")
        out["scan"] = _validate_scan(doc.get("scan", {}))
        return out

    if "scan" in doc:
        _fail("scan", "only stability scans take a scan section")
    out["init"] = _validate_init(doc.get("init", {}), out["scheme"], study)
    out["report"] = _validate_report(doc.get("report", {}), family, study)

    if study == "temporal":
        if family == "spectral":
            _fail("scheme.family", "temporal studies need a matrix operator; spectral is spatial-only")
        dofs = _dof_estimate(out["scheme"], out["grid"]["n"])
        if dofs > 2000:
            _fail("grid.n", (
                f"temporal studies compare against a dense matrix exponential; "
                f"{dofs} unknowns exceed the 2000 limit"
            ))
    return out


def load_config(path: str) -> dict:
    """Read a JSON study description from disk."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("rkdg-lab")
    except Exception:
        return "unknown"


def study_to_dict(result: StudyResult) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        "package_version": _package_version(),
        "name": result.name,
        "study": result.study,
        "config": result.config,
        "fitted_rate": result.fitted_rate,
        "rate_pairwise": list(result.pairwise),
        "levels": [
            {
                "scale": lv.scale,
                "n_dofs": lv.n_dofs,
                "tau": lv.tau,
                "n_steps": lv.n_steps,
                "error": lv.error,
                "components": dict(lv.components),
                "mu": lv.mu,
                "op_norm": lv.op_norm,
                "extra": dict(lv.extra),
            }
            for lv in result.levels
        ],
        "assertions": dict(result.assertions),
        "passed": result.passed,
        "flags": list(result.flags),
        "meta": dict(result.meta),
    }
    if result.study == "stability":
        doc["scan"] = [dict(row) for row in result.rows]
    return doc


def write_report(result: StudyResult, out_dir: str, stem: str, fmt: str = "both") -> list[str]:
    """Serialize a study result as CSV and/or JSON; returns paths written."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, stem + ".csv")
        with open(path, "w", encoding="utf-8") as fh:
            if result.study == "stability":
                fh.write(SCAN_CSV_HEADER + "\n")
                for row in result.rows:
                    fh.write(
                        f"{row['lambda']:.12g},{row['tau']:.12e},"
                        f"{row['amplification']:.12e},{str(row['stable']).lower()}\n"
                    )
            else:
                fh.write(CSV_HEADER + "\n")
                for lv, rate in zip(result.levels, result.pairwise):
                    cell = "" if rate is None else f"{rate:.6f}"
                    fh.write(f"{lv.scale:.12g},{lv.error:.12e},{cell}\n")
        paths.append(path)
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, stem + ".json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(study_to_dict(result), fh, indent=2)
            fh.write("\n")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Check batteries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


def _check(name: str, value: float, bound: float, detail: str = "") -> CheckResult:
    return CheckResult(name, float(value), float(bound), bool(value <= bound), detail)


def format_checks(results: Sequence[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        tag = "ok  " if r.passed else "FAIL"
        suffix = f"  ({r.detail})" if r.detail else ""
        lines.append(
            f"{tag} {r.name:<{width}}  value {r.value:.3e}  bound {r.bound:.1e}{suffix}"
        )
    return "\n".join(lines)


def _derivative_jumps(u: DGFunction) -> np.ndarray:
    """Jumps of u' across interfaces, plus side minus the minus side."""
    k, mesh = u.degree, u.mesh
    tab = legendre_table(k, np.array([-1.0, 1.0]), nderiv=1)[1]  # (k+1, 2)
    scale = np.sqrt((2.0 * np.arange(k + 1) + 1.0) / mesh.widths[:, None])
    chain = 2.0 / mesh.widths
    left = (u.coeffs * scale * tab[:, 0]).sum(axis=1) * chain
    right = (u.coeffs * scale * tab[:, 1]).sum(axis=1) * chain
    return np.roll(left, -1) - right


def _random_dg(mesh: Mesh1D, degree: int, rng) -> DGFunction:
    vec = rng.standard_normal(mesh.n_cells * (degree + 1))
    vec /= np.linalg.norm(vec)
    return DGFunction.from_vector(mesh, degree, vec)


def check_operators(seed: int = DEFAULT_SEED) -> list[CheckResult]:
    """Structural identities of the assembled operators, plus the growth
    envelope facts the time integrators rely on."""
    rng = np.random.default_rng(seed)
    out = []

    cases = [
        (Mesh1D.uniform(16), 2, 0.3),
        (Mesh1D.perturbed(24, rel=0.25, seed=seed + 3), 1, 0.0),
        (Mesh1D.uniform(12), 3, 1.0),
    ]

    worst = 0.0
    for mesh, k, th in cases:
        a = assemble_d_theta(mesh, k, th)
        b = assemble_d_theta(mesh, k, 1.0 - th)
        worst = max(worst, float(np.max(np.abs((a.mat + b.mat.T).toarray()))))
    out.append(_check("derivative_transpose_flip", worst, 1e-12))

    worst = 0.0
    for mesh, k, th in cases:
        a = assemble_d_theta(mesh, k, th)
        u = _random_dg(mesh, k, rng)
        expected = (th - 0.5) * jump_energy(u)
        worst = max(worst, abs(quadratic_form(a, u.vector) - expected))
    out.append(_check("derivative_quadratic_form", worst, 1e-11))

    mesh16 = Mesh1D.uniform(16)
    meshp = Mesh1D.perturbed(14, rel=0.2, seed=seed + 9)
    composite_ops = {
        "advection": assemble_high_order_lh(mesh16, 2, 1, -1.0, theta0=1.0),
        "heat": assemble_high_order_lh(meshp, 2, 2, 1.0, theta0=1.0, thetas=(1.0,)),
        "dispersive": assemble_high_order_lh(mesh16, 1, 3, -1.0, theta0=1.0, thetas=(1.0,)),
        "ultraweak": assemble_ultraweak_third(meshp, 3),
        "wave": assemble_wave_alphabeta(mesh16, 1, 0.3, -0.4, -0.15),
        "pair": assemble_energy_conserving_pair(meshp, 1),
        "central": assemble_central_advection(mesh16, 1, 0.35 * mesh16.h_min)[0],
        "advection2d": assemble_advection_2d(Mesh2D.uniform(8, 8), 1, 1.0, 0.75),
    }
    worst_name, worst = "", 0.0
    for name, op in composite_ops.items():
        mu = semiboundedness_mu(op)
        if mu > worst:
            worst_name, worst = name, mu
    out.append(_check("semibounded_catalog", worst, 1e-10, detail=worst_name or "all"))

    op = assemble_ultraweak_third(meshp, 3)
    u = _random_dg(meshp, 3, rng)
    expected = -0.5 * float(np.sum(_derivative_jumps(u) ** 2))
    value = abs(quadratic_form(op, u.vector) - expected) / max(1.0, abs(expected))
    out.append(_check("ultraweak_energy_identity", value, 1e-10))

    alpha, b1, b2 = 0.3, -0.4, -0.15
    op = assemble_wave_alphabeta(mesh16, 2, alpha, b1, b2)
    vec = rng.standard_normal(op.n)
    vec /= np.linalg.norm(vec)
    w, chi = split_fields(vec, [mesh16, mesh16], 2)
    expected = b2 * jump_energy(w) + b1 * jump_energy(chi)
    out.append(_check(
        "wave_energy_identity", abs(quadratic_form(op, vec) - expected), 1e-10
    ))

    op = assemble_energy_conserving_pair(mesh16, 2)
    value = float(np.max(np.abs((op.mat + op.mat.T).toarray())))
    out.append(_check("conserving_pair_skew", value, 1e-12))

    op = assemble_central_advection(mesh16, 1, 1e30)[0]
    value = float(np.max(np.abs((op.mat + op.mat.T).toarray())))
    out.append(_check("central_transport_skew", value, 1e-12))

    # Forward Euler on a skew operator grows by exactly sqrt(1 + (tau s)^2).
    skew = assemble_high_order_lh(Mesh1D.uniform(24), 1, 1, -1.0, theta0=0.5)
    sigma = operator_norm(skew)
    tau = 0.8 / sigma
    predicted = math.sqrt(1.0 + (tau * sigma) ** 2)
    measured = amplification_norm(skew, resolve_scheme("euler"), tau)
    out.append(_check(
        "euler_skew_growth", abs(measured - predicted) / predicted, 1e-10
    ))

    value = abs(resolve_scheme("two_step_rk4").order - 4)
    out.append(_check("two_step_rk4_order", value, 0.5))

    worst = 0.0
    for a in (-3.0, -1.0, -1e-4, 1e-4, 0.5, 2.0):
        for t in (0.05, 0.7, 1.3, 3.0):
            ref = _sigma_series(a, t)
            worst = max(worst, abs(sigma_factor(a, t) - ref) / max(1.0, abs(ref)))
    out.append(_check("sigma_factor_series", worst, 1e-12))

    worst = 0.0
    for a in (-1e-12, 0.0, 1e-12):
        for t in (0.3, 1.7):
            expansion = t * (1.0 + 0.5 * a * t + a * a * t * t / 6.0)
            worst = max(worst, abs(sigma_factor(a, t) - expansion))
    out.append(_check("sigma_factor_limit", worst, 1e-9))

    heat = assemble_high_order_lh(mesh16, 1, 2, 1.0, theta0=1.0, thetas=(1.0,))
    mu = semiboundedness_mu(heat)
    nrm = operator_norm(heat)
    rk = resolve_scheme("ssp3")
    tau = 0.9 * stability_budget(rk) / nrm
    u0 = project_l2(lambda x: np.sin(x) + 0.4 * np.cos(2 * x), mesh16, 1).vector
    marched = evolve(heat, u0, tau, 1.0, rk, record_norms=True)
    worst = 0.0
    for i, nv in enumerate(marched.norms):
        t_i = min(i * tau, 1.0)
        envelope = marched.norms[0] * math.exp(max(mu, 0.0) * t_i)
        worst = max(worst, nv / envelope - 1.0)
    out.append(_check("decay_envelope", max(worst, 0.0), 1e-10))

    return out


def _sigma_series(a: float, t: float) -> float:
    """Power series sum_{n>=1} a^{n-1} t^n / n! in extended precision."""
    acc = np.longdouble(0.0)
    term = np.longdouble(t)
    for n in range(1, 45):
        acc += term
        term = term * np.longdouble(a) * np.longdouble(t) / np.longdouble(n + 1)
    return float(acc)


def check_projections(seed: int = DEFAULT_SEED) -> list[CheckResult]:
    """Identities of the projection toolkit: flux interpolation, the
    inverse of the discrete derivative, and the composed construction."""
    rng = np.random.default_rng(seed)
    out = []
    w = _sine_profile(1.0, offset=0.7)(0.37)

    cases = [
        (Mesh1D.uniform(16), 1, 0.0),
        (Mesh1D.uniform(16), 2, 1.0),
        (Mesh1D.perturbed(20, rel=0.25, seed=seed + 1), 2, 0.3),
        (Mesh1D.perturbed(12, rel=0.2, seed=seed + 2), 1, 1.0),
    ]

    worst = 0.0
    for mesh, k, th in cases:
        u = pi_theta(w, mesh, k, th, npts=k + 12)
        rhs = project_l2(w.deriv(1), mesh, k, npts=k + 12)
        dop = assemble_d_theta(mesh, k, th)
        defect = np.linalg.norm(dop.apply(u.vector) - rhs.vector)
        worst = max(worst, float(defect / np.linalg.norm(rhs.vector)))
    out.append(_check("flux_projection_commutes", worst, 1e-10))

    worst = 0.0
    for mesh, k, th in cases:
        u = pi_theta(w, mesh, k, th, npts=k + 12)
        minus, plus = u.interface_values()
        target = w(mesh.interfaces)
        worst = max(worst, float(np.max(np.abs(th * minus + (1 - th) * plus - target))))
    out.append(_check("flux_projection_traces", worst, 1e-11))

    combos = [
        (Mesh1D.uniform(16), 1, 1, -1.0, 1.0),
        (Mesh1D.perturbed(14, rel=0.2, seed=seed + 4), 2, 2, 1.0, 1.0),
        (Mesh1D.uniform(12), 1, 3, -1.0, 1.0),
        (Mesh1D.perturbed(10, rel=0.15, seed=seed + 5), 2, 1, 1.0, 0.25),
    ]
    worst_direct, worst_reduced, worst_mean = 0.0, 0.0, 0.0
    for mesh, k, q, beta, th0 in combos:
        ths = _fill_thetas(q, th0, ())
        op = assemble_high_order_lh(mesh, k, q, beta, theta0=th0, thetas=ths)
        action = lambda x, beta=beta, q=q: beta * w.deriv(q)(x)
        proj = composed_projection(w, mesh, k, q, theta0=th0, thetas=ths, npts=k + 8)
        worst_direct = max(worst_direct, commuting_defect(op, proj, action, npts=k + 8))
        worst_mean = max(worst_mean, abs(proj.mean() - mean_value(w, mesh, npts=k + 8)))
        reduced = composed_projection(
            w, mesh, k, q, theta0=th0, thetas=ths, variant="reduced", npts=k + 8
        )
        worst_reduced = max(worst_reduced, commuting_defect(op, reduced, action, npts=k + 8))
    out.append(_check("composed_projection_commutes", worst_direct, 1e-9))
    out.append(_check("composed_projection_reduced", worst_reduced, 1e-9))
    out.append(_check("composed_projection_mean", worst_mean, 1e-12))

    worst_fwd, worst_bwd, worst_mean = 0.0, 0.0, 0.0
    for mesh, k, th in cases:
        dop = assemble_d_theta(mesh, k, th)
        z = make_mean_zero(_random_dg(mesh, k, rng))
        x = d_theta_inverse_apply(th, z)
        residual = np.linalg.norm(dop.apply(x.vector) - z.vector) / np.linalg.norm(z.vector)
        worst_fwd = max(worst_fwd, float(residual))
        worst_mean = max(worst_mean, abs(x.function.integral()) / x.norm())
        u0 = make_mean_zero(_random_dg(mesh, k, rng))
        image = make_mean_zero(DGFunction.from_vector(mesh, k, dop.apply(u0.vector)))
        back = d_theta_inverse_apply(th, image)
        worst_bwd = max(
            worst_bwd,
            float(np.linalg.norm(back.vector - u0.vector) / np.linalg.norm(u0.vector)),
        )
    out.append(_check("derivative_inverse_left", worst_fwd, 1e-10))
    out.append(_check("derivative_inverse_right", worst_bwd, 1e-10))
    out.append(_check("derivative_inverse_mean", worst_mean, 1e-11))

    kappas = [d_theta_inverse_norm(Mesh1D.uniform(n), 1, 0.75) for n in (16, 32, 64, 128)]
    ratio = max(kappas) / min(kappas)
    out.append(_check(
        "derivative_inverse_bounded", ratio, 2.0,
        detail=f"kappa range {min(kappas):.3f}..{max(kappas):.3f}",
    ))

    worst = 0.0
    target = lambda x1, x2: np.sin(x1 + 2.0 * x2) + 0.4 * np.cos(x2)
    mesh2 = Mesh2D.uniform(6, 5)
    for k in (1, 2):
        u = pi_tensor_2d(target, mesh2, k, 1.0, 0.75, npts=k + 3)
        res = tensor_projection_residuals(u, target, 1.0, 0.75, npts=k + 3)
        worst = max(worst, max(res.values()))
    out.append(_check("tensor_projection_residuals", worst, 1e-10))

    return out
