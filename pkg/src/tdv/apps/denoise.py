"""Denoising with the joint (reduced) and single (full) TDV models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..anisotropy import DirectionModel, estimate_direction_model
from ..fields import ScalarField
from ..pdhg import DataTerm, SolveResult, solve
from ..tdvop import LevelWeights, build_joint, build_stack

__all__ = ["JointModelSpec", "DenoiseResult", "denoise_joint", "denoise_single"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointModelSpec:
    """Parameters of the joint denoising model.

    Attributes
    ----------
    orders : tuple of float
        ``(alpha_1, alpha_2, alpha_3)``; zero disables an order.
    eta : float
        Data fidelity weight.
    beta : float or "vary"
        Second contraction weight ``b2``; ``"vary"`` rescales the local
        anisotropy. ``b1`` is always 1.
    sigma, rho : float
        Structure tensor scales for the first outer iteration.
    schedule : sequence of (sigma, rho), optional
        Scales for the following outer iterations; the last pair repeats.
    outer, inner : int
        Outer iterations (direction re-estimation) and PDHG iterations each.
    isotropic : bool
        Use identity weights (plain higher-order TV) instead of ``M``.
    model : DirectionModel, optional
        Fixed weighting; disables estimation.
    gamma : float
        Direction smoothing strength.
    accelerated : bool
        Use the strongly convex step schedule.
    """

    orders: tuple = (1.0, 0.0, 0.0)
    eta: float = 1.0
    beta: float | str = "vary"
    sigma: float = 1.8
    rho: float = 2.8
    schedule: tuple = ()
    outer: int = 2
    inner: int = 500
    isotropic: bool = False
    model: DirectionModel | None = None
    gamma: float = 1.0
    accelerated: bool = False
    gap_tol: float | None = None

    def __post_init__(self):
        orders = tuple(float(a) for a in self.orders)
        if not orders or len(orders) > 3 or any(a < 0 for a in orders) or not any(a > 0 for a in orders):
            raise ValueError(f"orders must be 1..3 nonnegative weights with at least one positive, got {self.orders}")
        object.__setattr__(self, "orders", orders)
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if isinstance(self.beta, str):
            if self.beta != "vary":
                raise ValueError(f"beta must be in [0, 1] or 'vary', got {self.beta!r}")
        elif not 0 <= self.beta <= 1:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.outer < 1 or self.inner < 1:
            raise ValueError("outer and inner iteration counts must be positive")
        if self.isotropic and self.model is not None:
            raise ValueError("isotropic and a fixed model are mutually exclusive")

    def scales(self, t: int):
        if t == 0 or not self.schedule:
            return self.sigma, self.rho
        return tuple(self.schedule[min(t - 1, len(self.schedule) - 1)])


@dataclass
class DenoiseResult:
    u: np.ndarray
    v: np.ndarray | None
    beta: np.ndarray | None
    solves: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.solves)

    @property
    def final_gap(self):
        return self.solves[-1].final_gap if self.solves else None

    @property
    def energy(self):
        return self.solves[-1].energy if self.solves else None


def _values(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def denoise_joint(f, spec: JointModelSpec, trace=None) -> DenoiseResult:
    """Alternate direction estimation and reduced-model PDHG solves.

    Each outer iteration estimates ``(v, beta)`` from the current image,
    builds one dual block per active order and warm-starts PDHG from the
    previous primal and dual iterates.
    """
    f = _values(f)
    dt = DataTerm.quadratic(f, spec.eta)
    u, w = f.copy(), None
    model = spec.model
    solves: list[SolveResult] = []
    outer = 1 if (spec.isotropic or spec.model is not None) else spec.outer
    for t in range(outer):
        if not spec.isotropic and spec.model is None:
            sigma, rho = spec.scales(t)
            model, _ = estimate_direction_model(u, sigma, rho, spec.beta, spec.gamma)
        K = build_joint(spec.orders, None if spec.isotropic else model, f.shape)
        r = solve(
            K,
            dt,
            max_iters=spec.inner,
            gap_tol=spec.gap_tol,
            accelerated=spec.accelerated,
            z_init=[u],
            w_init=w,
            trace=trace,
        )
        logger.info("outer %d: %d iterations, gap %s", t, r.iterations, r.final_gap)
        u, w = r.u, r.state.w
        solves.append(r)
    if model is None or spec.isotropic:
        return DenoiseResult(u, None, None, solves)
    return DenoiseResult(u, model.v, model.b2, solves)


def denoise_single(
    f,
    q: int,
    levels,
    alpha,
    eta: float,
    *,
    sigma: float = 1.8,
    rho: float = 2.8,
    beta: float | str = "vary",
    gamma: float = 1.0,
    max_iters: int = 500,
    gap_tol: float | None = None,
    tau: float | None = None,
    sigma_step: float | None = None,
    trace=None,
) -> SolveResult:
    """Full single-order model with the bidiagonal operator stack.

    Parameters
    ----------
    levels : sequence
        One entry per level ``j = 1..q``: ``None`` or ``"I"`` for identity,
        ``"M"`` for the weighting estimated from ``f``, or a
        :class:`DirectionModel`.
    alpha : sequence of float
        ``(alpha_0, .., alpha_{q-1})``.
    """
    f = _values(f)
    levels = list(levels)
    if len(levels) != q:
        raise ValueError(f"need {q} level choices, got {len(levels)}")
    estimated = None
    models = []
    for lv in levels:
        if lv is None or lv == "I":
            models.append(None)
        elif isinstance(lv, DirectionModel):
            models.append(lv)
        elif lv == "M":
            if estimated is None:
                estimated, _ = estimate_direction_model(f, sigma, rho, beta, gamma)
            models.append(estimated)
        else:
            raise ValueError(f"level choice must be 'I', 'M' or a DirectionModel, got {lv!r}")
    K = build_stack(q, LevelWeights(tuple(models)), alpha, f.shape)
    return solve(
        K,
        DataTerm.quadratic(f, eta),
        max_iters=max_iters,
        gap_tol=gap_tol,
        tau=tau,
        sigma=sigma_step,
        trace=trace,
    )
