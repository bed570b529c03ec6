"""Time integration for linear semidiscrete systems u' = L u.

A scheme here is the polynomial it applies per step: one step of any
explicit Runge-Kutta method on a linear autonomous system reduces to

    u^{n+1} = R(tau L) u^n,     R(z) = sum_{i=0}^{s} alpha_i z^i,

so schemes are represented by their coefficient tuple (alpha_0..alpha_s)
and applied by Horner's rule with matrix-vector products only. The
linear order is read off the coefficients: p is the largest index
through which alpha_i = 1/i!.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .core_fem import NumericalError
from .dg_ops1d import LinearOperator, operator_norm


def _linear_order(alphas: Sequence[float]) -> int:
    p = -1
    for i, a in enumerate(alphas):
        target = 1.0 / math.factorial(i)
        if abs(a - target) <= 1e-13 * target:
            p = i
        else:
            break
    return p


@dataclass(frozen=True)
class RKScheme:
    """Stability-polynomial form of an explicit RK scheme."""

    alphas: tuple
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.alphas) < 2:
            raise ValueError("a scheme needs at least alpha_0 and alpha_1")

    @property
    def stages(self) -> int:
        return len(self.alphas) - 1

    @property
    def order(self) -> int:
        """Largest p with alpha_i = 1/i! for all i <= p (capped at the
        polynomial degree)."""
        return _linear_order(self.alphas)

    def amplification(self, z: np.ndarray) -> np.ndarray:
        """R(z) for scalar or array z (complex welcome)."""
        z = np.asarray(z)
        out = np.full_like(z, self.alphas[-1], dtype=complex)
        for a in self.alphas[-2::-1]:
            out = out * z + a
        return out


def taylor_rk(p: int) -> RKScheme:
    """The degree-p truncated exponential: alpha_i = 1/i! for i <= p."""
    if p < 1:
        raise ValueError("order must be at least 1")
    return RKScheme(tuple(1.0 / math.factorial(i) for i in range(p + 1)), name=f"taylor{p}")


def custom_rk(alphas: Sequence[float], name: str = "custom") -> RKScheme:
    """A scheme from raw stability coefficients.

    Requires alpha_0 = 1 (consistency of the update with the identity at
    tau = 0) and alpha_1 = 1 (first order); everything else is free.
    """
    alphas = tuple(float(a) for a in alphas)
    if len(alphas) < 2:
        raise ValueError("need at least (alpha_0, alpha_1)")
    if alphas[0] != 1.0:
        raise ValueError(f"alpha_0 must be 1, got {alphas[0]!r}")
    if abs(alphas[1] - 1.0) > 1e-13:
        raise ValueError(f"alpha_1 must be 1 for a consistent scheme, got {alphas[1]!r}")
    return RKScheme(alphas, name=name)


def two_step_rk4() -> RKScheme:
    """Two half-steps of the classical fourth-order scheme merged into one
    polynomial: R(z) = R4(z/2)^2, degree 8, still order 4 (the z^5
    coefficient is 1/128, not 1/120)."""
    alphas = (
        1.0,
        1.0,
        1.0 / 2.0,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 128.0,
        5.0 / 4608.0,
        1.0 / 9216.0,
        1.0 / 147456.0,
    )
    return RKScheme(alphas, name="two_step_rk4")


#: Named schemes accepted by configuration files. heun, ssp3, and rk4
#: reduce to the truncated exponential of matching order on linear
#: problems, which is the form stored here.
PRESET_SCHEMES: dict[str, Callable[[], RKScheme]] = {
    "euler": lambda: taylor_rk(1),
    "heun": lambda: RKScheme((1.0, 1.0, 0.5), name="heun"),
    "ssp3": lambda: RKScheme((1.0, 1.0, 0.5, 1.0 / 6.0), name="ssp3"),
    "rk4": lambda: RKScheme((1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0), name="rk4"),
    "taylor2": lambda: taylor_rk(2),
    "taylor3": lambda: taylor_rk(3),
    "taylor4": lambda: taylor_rk(4),
    "two_step_rk4": two_step_rk4,
}


def resolve_scheme(spec) -> RKScheme:
    """Accept an RKScheme, a preset name, or a coefficient sequence."""
    if isinstance(spec, RKScheme):
        return spec
    if isinstance(spec, str):
        try:
            return PRESET_SCHEMES[spec]()
        except KeyError:
            raise ValueError(
                f"unknown scheme {spec!r}; known: {sorted(PRESET_SCHEMES)}"
            ) from None
    return custom_rk(tuple(spec))


def _as_apply(op) -> Callable:
    if callable(op):
        return op
    return op.apply


def rk_step(op, u: np.ndarray, tau: float, scheme: RKScheme) -> np.ndarray:
    """One step u -> R(tau L) u by Horner's rule; s applications of L."""
    apply_l = _as_apply(op)
    alphas = scheme.alphas
    v = alphas[-1] * u
    for a in alphas[-2::-1]:
        v = a * u + tau * apply_l(v)
    return v


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EvolveResult:
    state: np.ndarray
    n_steps: int
    tau: float
    final_step: float          # length of the last step (== tau unless shortened)
    norms: tuple | None = None  # per-step coefficient norms if recorded


def evolve(
    op,
    u0: np.ndarray,
    tau: float,
    t_final: float,
    scheme: RKScheme,
    *,
    cfl_limit: float | None = None,
    op_norm: float | None = None,
    strict_cfl: bool = False,
    record_norms: bool = False,
) -> EvolveResult:
    """March u' = L u from 0 to t_final with uniform steps of length tau,
    finishing with one shorter step when tau does not divide t_final.

    When cfl_limit is given, tau * |L| is checked against it once up
    front (|L| measured unless op_norm passes it in); a violation warns,
    or raises NumericalError under strict_cfl.
    """
    if tau <= 0 or t_final < 0:
        raise ValueError("step size must be positive and horizon nonnegative")
    if cfl_limit is not None:
        nrm = operator_norm(op) if op_norm is None else op_norm
        if tau * nrm > cfl_limit * (1 + 1e-12):
            msg = (
                f"tau * |L| = {tau * nrm:.4e} exceeds the stability budget "
                f"{cfl_limit:.4e}"
            )
            if strict_cfl:
                raise NumericalError(msg)
            warnings.warn(msg, StabilityWarning, stacklevel=2)

    n_full = int(np.floor(t_final / tau + 1e-12))
    remainder = t_final - n_full * tau
    if remainder < 1e-12 * max(tau, 1.0):
        remainder = 0.0

    u = np.array(u0, copy=True)
    norms = [float(np.linalg.norm(u))] if record_norms else None
    for _ in range(n_full):
        u = rk_step(op, u, tau, scheme)
        if record_norms:
            norms.append(float(np.linalg.norm(u)))
    if remainder > 0.0:
        u = rk_step(op, u, remainder, scheme)
        if record_norms:
            norms.append(float(np.linalg.norm(u)))
    return EvolveResult(
        state=u,
        n_steps=n_full + (1 if remainder > 0 else 0),
        tau=tau,
        final_step=remainder if remainder > 0 else tau,
        norms=tuple(norms) if record_norms else None,
    )


def _dense_amplification(mat: np.ndarray, scheme: RKScheme, tau: float) -> np.ndarray:
    n = mat.shape[0]
    r = scheme.alphas[-1] * np.eye(n)
    for a in scheme.alphas[-2::-1]:
        r = a * np.eye(n) + tau * (mat @ r)
    return r


def amplification_norm(op, scheme: RKScheme, tau: float, *, seed: int = 7) -> float:
    """Spectral norm of R(tau L).

    Per-mode closed evaluation for spectral symbol operators; dense 2-norm
    up to n = 2000; power iteration on R^T R beyond that.
    """
    symbols = getattr(op, "symbols", None)
    if symbols is not None:
        best = 0.0
        for s in np.reshape(symbols, (-1,) + symbols.shape[-2:]):
            r = scheme.alphas[-1] * np.eye(s.shape[0], dtype=complex)
            for a in scheme.alphas[-2::-1]:
                r = a * np.eye(s.shape[0]) + tau * (s @ r)
            best = max(best, float(np.linalg.norm(r, 2)))
        return best

    mat = op.mat if isinstance(op, LinearOperator) else op
    n = mat.shape[0]
    if n <= 2000:
        dense = mat.toarray() if hasattr(mat, "toarray") else np.asarray(mat)
        return float(np.linalg.norm(_dense_amplification(dense, scheme, tau), 2))

    apply_l = _as_apply(op)

    def apply_r(v):
        return rk_step(apply_l, v, tau, scheme)

    mat_t = mat.T.tocsr() if hasattr(mat, "tocsr") else np.asarray(mat).T

    def apply_rt(v):
        w = scheme.alphas[-1] * v
        for a in scheme.alphas[-2::-1]:
            w = a * v + tau * (mat_t @ w)
        return w

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(5000):
        z = apply_rt(apply_r(v))
        zn = np.linalg.norm(z)
        if zn == 0.0:
            return 0.0
        new_sigma = float(np.sqrt(zn))
        v = z / zn
        if abs(new_sigma - sigma) <= 1e-10 * max(new_sigma, 1e-300):
            return new_sigma
        sigma = new_sigma
    raise NumericalError("power iteration on the amplification matrix stalled")


def expm_reference(op, t: float) -> np.ndarray:
    """Dense matrix exponential of t L with a semigroup self-check:
    expm(tL/2)^2 must reproduce expm(tL) to a relative 1e-9."""
    mat = op.mat if isinstance(op, LinearOperator) else op
    dense = mat.toarray() if hasattr(mat, "toarray") else np.asarray(mat)
    if dense.shape[0] > 2000:
        raise ValueError("reference exponential is dense-only; operator too large")
    full = scipy.linalg.expm(t * dense)
    half = scipy.linalg.expm(0.5 * t * dense)
    defect = np.linalg.norm(half @ half - full) / max(np.linalg.norm(full), 1e-300)
    if defect > 1e-9:
        raise NumericalError(
            f"matrix exponential failed its semigroup self-check: {defect:.3e}"
        )
    return full


def sigma_factor(a: float, t: float) -> float:
    """sigma(a, t) = (exp(a t) - 1) / a, the growth envelope factor; the
    limit value t is returned at a = 0 and expm1 keeps the small-|a t|
    regime fully accurate."""
    if t < 0:
        raise ValueError("sigma_factor needs t >= 0")
    if a == 0.0:
        return float(t)
    return float(np.expm1(a * t) / a)
