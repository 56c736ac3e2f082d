"""Primal-dual hybrid gradient solver for TDV-regularised problems.

Solves ``min_z max_w <K z, w> - F*(w) + G(z)`` where ``F*`` is the
indicator of a product of pointwise Euclidean balls (one radius per dual
block) and ``G`` acts on ``z_0`` only: either ``eta/2 ||S z_0 - f||^2`` or
the indicator of ``{S z_0 = S f}``. ``K`` is any operator with ``apply``,
``apply_adjoint``, ``radii``, ``primal_shapes``, ``dual_shapes`` and
``norm_bound`` (see :mod:`tdv.tdvop`).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import pointwise_norm
from .tdvop import UNCONSTRAINED, power_iteration
from .wavelet import dwt_forward, project_UD

__all__ = [
    "ConfigurationError",
    "UnsupportedOperatorError",
    "GapUnavailable",
    "NumericalFailure",
    "DataTerm",
    "SolverState",
    "SolveResult",
    "prox_polar_ball",
    "prox_quadratic_data",
    "prox_indicator_data",
    "prox_data",
    "data_energy",
    "pdhg_step",
    "accelerate",
    "pd_gap",
    "step_sizes",
    "solve",
]

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class UnsupportedOperatorError(ValueError):
    pass


class GapUnavailable(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DataTerm:
    """Data fidelity acting on ``z_0``.

    ``kind`` is ``"identity"``, ``"mask"`` or ``"wavelet"``. ``eta=None``
    selects the hard-constraint (indicator) mode. For ``"wavelet"`` the
    ``data`` are the coarse coefficients and ``levels`` the depth.
    """

    kind: str
    data: np.ndarray
    eta: float | None = None
    mask: np.ndarray | None = None
    levels: int = 2

    def __post_init__(self):
        if self.kind not in ("identity", "mask", "wavelet"):
            raise ConfigurationError(f"unknown data operator {self.kind!r}")
        object.__setattr__(self, "data", np.asarray(self.data, dtype=float))
        if self.eta is not None and not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.kind == "mask":
            if self.mask is None:
                raise ConfigurationError("mask data term needs a mask")
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.data.shape:
                raise ConfigurationError("mask and data shapes differ")
            if not mask.any():
                raise ConfigurationError("sampling mask is empty")
            object.__setattr__(self, "mask", mask)
            # unsampled data are never read
            object.__setattr__(self, "data", np.where(mask, self.data, 0.0))
        if self.kind == "wavelet" and self.eta is not None:
            raise UnsupportedOperatorError("quadratic wavelet data term needs a linear solver; use indicator mode")

    @classmethod
    def quadratic(cls, f, eta: float, mask=None) -> "DataTerm":
        if mask is None:
            return cls("identity", f, float(eta))
        return cls("mask", f, float(eta), mask)

    @classmethod
    def interpolation(cls, f, mask) -> "DataTerm":
        return cls("mask", f, None, mask)

    @classmethod
    def wavelet(cls, coarse, levels: int = 2) -> "DataTerm":
        return cls("wavelet", coarse, None, None, levels)

    @property
    def indicator(self) -> bool:
        return self.eta is None

    @property
    def strongly_convex(self) -> bool:
        return self.kind == "identity" and not self.indicator


@dataclass
class SolverState:
    z: list
    w: list
    zbar: list
    tau: float
    sigma: float
    omega: float = 1.0
    n: int = 0
    gap_history: list = field(default_factory=list)


@dataclass
class SolveResult:
    u: np.ndarray
    state: SolverState
    iterations: int
    final_gap: float | None
    energy_trace: list
    converged: bool
    L: float

    @property
    def energy(self) -> float | None:
        return self.energy_trace[-1][1] if self.energy_trace else None


def prox_polar_ball(w, radius):
    """Pointwise projection onto ``{|w| <= radius}``; norm taken across components."""
    w = np.asarray(w, dtype=float)
    if radius is UNCONSTRAINED:
        return w.copy()
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    scale = np.maximum(1.0, pointwise_norm(w) / radius)
    return w / scale


def prox_quadratic_data(z0, dt: DataTerm, tau: float):
    """``argmin_z |z - z0|^2 / (2 tau) + eta/2 |S z - f|^2`` for diagonal ``S^T S``."""
    if dt.indicator:
        raise ConfigurationError("data term is in indicator mode")
    if dt.kind == "wavelet":
        raise UnsupportedOperatorError("no solver registered for the wavelet quadratic data term")
    z0 = np.asarray(z0, dtype=float)
    te = tau * dt.eta
    if dt.kind == "identity":
        return (z0 + te * dt.data) / (1.0 + te)
    m = dt.mask.astype(float)
    return (z0 + te * m * dt.data) / (1.0 + te * m)


def prox_indicator_data(z0, dt: DataTerm):
    """Orthogonal projection onto ``{S z = S f}`` (wavelet: coarse band replacement)."""
    z0 = np.asarray(z0, dtype=float)
    if dt.kind == "identity":
        return dt.data.copy()
    if dt.kind == "mask":
        return np.where(dt.mask, dt.data, z0)
    return project_UD(z0, dt.data, dt.levels)


def prox_data(z0, dt: DataTerm, tau: float):
    return prox_indicator_data(z0, dt) if dt.indicator else prox_quadratic_data(z0, dt, tau)


def data_energy(z0, dt: DataTerm) -> float:
    """``eta/2 |S z0 - f|^2``; indicator terms return 0 (or ``inf`` if badly infeasible)."""
    if dt.indicator:
        if dt.kind == "mask":
            r = np.abs(z0 - dt.data)[dt.mask]
        elif dt.kind == "wavelet":
            r = np.abs(dwt_forward(z0, dt.levels).coarse - dt.data)
        else:
            r = np.abs(z0 - dt.data)
        return 0.0 if r.size == 0 or r.max() <= 1e-6 * (1 + np.abs(dt.data).max()) else math.inf
    r = z0 - dt.data
    if dt.kind == "mask":
        r = r * dt.mask
    return 0.5 * dt.eta * float(np.sum(r * r))


def pdhg_step(state: SolverState, K, dt: DataTerm, radii=None, gamma: float | None = None) -> SolverState:
    """One iteration: dual ascent with ball projection, primal descent with the data prox,
    optional acceleration, then extrapolation."""
    radii = K.radii if radii is None else radii
    Kz = K.apply(state.zbar)
    w = [prox_polar_ball(wj + state.sigma * kj, r) for wj, kj, r in zip(state.w, Kz, radii)]
    KTw = K.apply_adjoint(w)
    z_old = state.z
    z = [zj - state.tau * cj for zj, cj in zip(z_old, KTw)]
    z[0] = prox_data(z[0], dt, state.tau)
    new = replace(state, z=z, w=w, n=state.n + 1)
    if gamma is not None:
        new = accelerate(new, gamma)
    new.zbar = [zj + new.omega * (zj - zo) for zj, zo in zip(z, z_old)]
    return new


def _check_strongly_convex(K, dt):
    if not dt.strongly_convex or len(K.primal_shapes) != 1:
        raise ConfigurationError(
            "acceleration needs a strongly convex primal term: identity quadratic data and u as the only primal variable"
        )


def accelerate(state: SolverState, gamma: float, problem=None) -> SolverState:
    """``omega = (1 + 2 gamma tau)^-1/2``, ``tau <- omega tau``, ``sigma <- sigma / omega``.

    ``problem=(K, dt)`` validates strong convexity first.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if problem is not None:
        _check_strongly_convex(*problem)
    omega = 1.0 / math.sqrt(1.0 + 2.0 * gamma * state.tau)
    return replace(state, omega=omega, tau=state.tau * omega, sigma=state.sigma / omega)


def pd_gap(state: SolverState, K, dt: DataTerm, radii=None) -> float:
    """Primal-dual gap for the identity quadratic data term.

    With ``c = K^T w`` the value is
    ``sum_j [alpha_j |(Kz)_j|_{2,1} - <(Kz)_j, w_j>] + |eta (z_0 - f) + c_0|^2 / (2 eta)``.
    Every bracket is nonnegative for feasible duals. The value is the exact
    gap when ``u`` is the only primal variable; otherwise the dual terms of
    the auxiliary variables are omitted.
    """
    radii = K.radii if radii is None else radii
    if not dt.strongly_convex:
        raise GapUnavailable(f"no closed-form gap for the {dt.kind} {'indicator' if dt.indicator else 'quadratic'} data term")
    if any(r is UNCONSTRAINED for r in radii):
        raise GapUnavailable("gap undefined with unconstrained dual blocks")
    Kz = K.apply(state.z)
    c0 = K.apply_adjoint(state.w)[0]
    gap = 0.0
    for kj, wj, r in zip(Kz, state.w, radii):
        gap += r * float(np.sum(pointwise_norm(kj))) - float(np.sum(kj * wj))
    res = dt.eta * (state.z[0] - dt.data) + c0
    gap += float(np.sum(res * res)) / (2.0 * dt.eta)
    return gap


def primal_energy(z, K, dt: DataTerm) -> float:
    return K.energy(z) + data_energy(z[0], dt)


def step_sizes(K, tau=None, sigma=None, power_iters: int = 100, rule: str = "bound", balance: float = 1.0):
    """Default ``tau = balance / L``, ``sigma = 1 / (balance L)``.

    ``balance`` trades primal against dual step length without changing
    ``tau sigma L^2``; values below one suit problems whose primal variable
    is small compared with the dual radii.

    ``rule="bound"`` takes ``L = max(bound, 1.01 * power estimate)``;
    ``rule="estimate"`` takes ``L = 1.01 * power estimate`` alone, which is
    much less conservative for weighted higher-order operators. User-supplied
    steps are checked against the raw power estimate: ``tau sigma L_est^2 < 1``.
    """
    if rule not in ("bound", "estimate"):
        raise ConfigurationError(f"unknown step rule {rule!r}")
    raw = power_iteration(K, power_iters)
    est = 1.01 * raw
    L = max(K.norm_bound(), est) if rule == "bound" else est
    if not balance > 0:
        raise ConfigurationError(f"step balance must be positive, got {balance}")
    if tau is None and sigma is None:
        return balance / L, 1.0 / (balance * L), L
    tau = balance / L if tau is None else float(tau)
    sigma = 1.0 / (balance * L) if sigma is None else float(sigma)
    if not tau > 0 or not sigma > 0:
        raise ConfigurationError("step sizes must be positive")
    if tau * sigma * raw**2 >= 1.0:
        raise ConfigurationError(f"steps violate tau*sigma*L^2 < 1 (L ~ {raw:.4g})")
    return tau, sigma, L


def solve(
    K,
    dt: DataTerm,
    *,
    max_iters: int = 500,
    gap_tol: float | None = None,
    gap_every: int = 10,
    accelerated: bool = False,
    gamma: float | None = None,
    tau: float | None = None,
    sigma: float | None = None,
    z_init=None,
    w_init=None,
    change_tol: float = 0.0,
    step_rule: str = "bound",
    balance: float = 1.0,
    trace=None,
) -> SolveResult:
    """Run PDHG until the gap (or, when unavailable, the relative iterate
    change) falls below its tolerance or ``max_iters`` is reached.

    Parameters
    ----------
    gap_tol : float, optional
        Defaults to ``1e-6`` times the pixel count.
    accelerated : bool
        Use the strongly convex step schedule with parameter ``gamma``
        (default ``0.5 * eta``).
    z_init, w_init : list of arrays, optional
        Warm start; zeros otherwise.
    change_tol : float
        Relative iterate-change threshold used when the gap is unavailable;
        ``0`` disables it.
    step_rule : {"bound", "estimate"}
        How the default steps are derived, see :func:`step_sizes`.
    balance : float
        Ratio ``tau / (1/L)`` of the default steps, see :func:`step_sizes`.
    trace : path or file object, optional
        CSV trace of ``iteration,energy,gap`` at every check.
    """
    shape = K.primal_shapes[0]
    if dt.data.shape != shape and dt.kind != "wavelet":
        raise ConfigurationError(f"data of shape {dt.data.shape} does not match the operator grid {shape}")
    if accelerated:
        _check_strongly_convex(K, dt)
        gamma = 0.5 * dt.eta if gamma is None else float(gamma)
    else:
        gamma = None
    if gap_tol is None:
        gap_tol = 1e-6 * int(np.prod(shape))
    tau, sigma, L = step_sizes(K, tau, sigma, rule=step_rule, balance=balance)

    z = [np.zeros(s) for s in K.primal_shapes] if z_init is None else [np.array(x, dtype=float) for x in z_init]
    w = [np.zeros(s) for s in K.dual_shapes] if w_init is None else [np.array(x, dtype=float) for x in w_init]
    if dt.indicator:
        z[0] = prox_indicator_data(z[0], dt)
    state = SolverState(z=z, w=w, zbar=[x.copy() for x in z], tau=tau, sigma=sigma)

    gap_ok = True
    try:
        pd_gap(state, K, dt)
    except GapUnavailable as exc:
        gap_ok = False
        logger.debug("gap stopping disabled: %s", exc)

    close = False
    if trace is not None and not hasattr(trace, "write"):
        trace = open(trace, "w", newline="")
        close = True
    writer = csv.writer(trace) if trace is not None else None
    if writer:
        writer.writerow(["iteration", "energy", "gap"])

    energy_trace = []
    gap = None
    converged = False
    try:
        for it in range(1, max_iters + 1):
            z_prev = state.z
            state = pdhg_step(state, K, dt, gamma=gamma)
            if it % gap_every == 0 or it == max_iters:
                e = primal_energy(state.z, K, dt)
                if not np.all([np.all(np.isfinite(x)) for x in state.z]) or math.isnan(e):
                    raise NumericalFailure(f"iterates diverged at iteration {it}")
                energy_trace.append((it, e))
                if gap_ok:
                    gap = pd_gap(state, K, dt)
                    state.gap_history.append(gap)
                    if writer:
                        writer.writerow([it, repr(e), repr(gap)])
                    if gap <= gap_tol:
                        converged = True
                        break
                else:
                    if writer:
                        writer.writerow([it, repr(e), ""])
                    if change_tol > 0:
                        num = math.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(state.z, z_prev)))
                        den = math.sqrt(sum(float(np.sum(a * a)) for a in state.z))
                        if num <= change_tol * max(den, 1e-300):
                            converged = True
                            break
    finally:
        if close:
            trace.close()
    return SolveResult(state.z[0], state, state.n, gap, energy_trace, converged, L)
