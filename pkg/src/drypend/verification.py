"""Empirical checks of the structural facts the solver relies on.

Each check samples the model on a deterministic low-discrepancy grid and
returns a CheckReport with the worst margin found and the inputs that
produced it, so every reported number can be recomputed directly.  These
are falsification tests with explicit constants, not proofs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Params, PivotLaw, State, limit_fields
from .integrator import Tolerances, integrate


def _halton(n: int, base: int, start: int = 0) -> np.ndarray:
    """First n points of the base-b van der Corput sequence from `start`."""
    out = np.empty(n)
    for k in range(n):
        i = start + k + 1
        f = 1.0
        r = 0.0
        while i > 0:
            f /= base
            r += f * (i % base)
            i //= base
        out[k] = r
    return out


def _seed_offset(fingerprint: str) -> int:
    return int(hashlib.sha256(fingerprint.encode()).hexdigest()[:8], 16) % 100_000


@dataclass(frozen=True)
class SampleGrid:
    """Deterministic sample locations for the pointwise checks."""

    q_points: np.ndarray
    p_points: np.ndarray
    t_points: np.ndarray
    pair_count: int

    def __post_init__(self):
        if min(self.q_points.size, self.p_points.size, self.t_points.size) == 0:
            raise ValueError("grid axes must be non-empty")

    @staticmethod
    def for_scenario(
        fingerprint: str,
        q_range: tuple[float, float] = (-1.0, math.pi + 1.0),
        p_range: tuple[float, float] = (-4.0, 4.0),
        t_range: tuple[float, float] = (0.0, 20.0),
        n_q: int = 64,
        n_p: int = 64,
        n_t: int = 32,
        pair_count: int = 4096,
    ) -> "SampleGrid":
        off = _seed_offset(fingerprint)
        q = q_range[0] + (q_range[1] - q_range[0]) * _halton(n_q, 2, off)
        p = p_range[0] + (p_range[1] - p_range[0]) * _halton(n_p, 3, off)
        p = p[np.abs(p) > 1e-3]  # keep two-sided pairing well defined
        t = t_range[0] + (t_range[1] - t_range[0]) * _halton(n_t, 5, off)
        return SampleGrid(q_points=q, p_points=p, t_points=t, pair_count=pair_count)


@dataclass
class CheckReport:
    name: str
    passed: bool
    margin: float
    worst_case: dict
    estimated_constant: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "worst_case": self.worst_case,
            "estimated_constant": self.estimated_constant,
            "details": self.details,
        }


def _field_arrays(params: Params, pivot: PivotLaw, q, p, t):
    """Vectorized right-hand side (dq, dp) off the surface."""
    a = np.asarray(pivot.accel(t), dtype=float)
    l, g, mu = params.l, params.g, params.mu
    mag = np.abs(a * np.cos(q) - l * p * p + g * np.sin(q))
    dp = (a / l) * np.sin(q) - (mu / l) * mag * np.sign(p) - (g / l) * np.cos(q)
    return p, dp


def smooth_lipschitz_bound(
    params: Params, pivot: PivotLaw, p_max: float, t0: float, t1: float
) -> float:
    """Norm Lipschitz over-estimate of the smooth branches on |p| <= p_max.

    Frobenius bound of the branch Jacobian using the partial-derivative
    envelopes |d(dp)/dq| <= (1 + mu)(sup|a| + g)/l and |d(dp)/dp| <= 2 mu p_max.
    """
    sup_a = pivot.sup_bound(t0, t1)
    dq_env = (1.0 + params.mu) * (sup_a + params.g) / params.l
    dp_env = 2.0 * params.mu * p_max
    return math.sqrt(1.0 + dq_env ** 2 + dp_env ** 2)


def check_jump_inequality(params: Params, pivot: PivotLaw, grid: SampleGrid) -> CheckReport:
    """f_minus_p - f_plus_p >= 0 everywhere, equal to twice the friction bound.

    The gap is compared against its closed form (2 mu / l)|a cos q + g sin q|;
    agreement is relative to the local field scale since the gap itself
    passes through zero.
    """
    q = grid.q_points[:, None]
    t = grid.t_points[None, :]
    a = np.asarray(pivot.accel(grid.t_points), dtype=float)[None, :]
    l, g, mu = params.l, params.g, params.mu
    drift = (a / l) * np.sin(q) - (g / l) * np.cos(q)
    bound = (mu / l) * np.abs(a * np.cos(q) + g * np.sin(q))
    f_plus = drift - bound
    f_minus = drift + bound
    gap = f_minus - f_plus
    closed = 2.0 * bound
    scale = np.maximum(np.abs(f_plus), np.abs(f_minus))
    scale = np.maximum(scale, closed)
    scale[scale == 0.0] = 1.0
    agreement = np.abs(gap - closed) / scale
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    margin = float(gap[i, j])
    worst_agree = float(np.max(agreement))
    passed = margin >= 0.0 and worst_agree <= 1e-12
    return CheckReport(
        name="jump_inequality",
        passed=passed,
        margin=margin,
        worst_case={"q": float(grid.q_points[i]), "t": float(grid.t_points[j])},
        details={"max_relative_disagreement": worst_agree},
    )


def _pair_sets(params: Params, grid: SampleGrid, fingerprint: str):
    """Same-t sample pairs: half same-side of p = 0, half straddling."""
    n = grid.pair_count
    off = _seed_offset(fingerprint + "pairs")
    u = _halton(n, 2, off)
    v = _halton(n, 3, off)
    w = _halton(n, 5, off)
    x = _halton(n, 7, off)
    s = _halton(n, 11, off)
    q_lo, q_hi = float(np.min(grid.q_points)), float(np.max(grid.q_points))
    p_hi = float(np.max(np.abs(grid.p_points)))
    t_lo, t_hi = float(np.min(grid.t_points)), float(np.max(grid.t_points))
    q1 = q_lo + (q_hi - q_lo) * u
    q2 = q_lo + (q_hi - q_lo) * v
    t = t_lo + (t_hi - t_lo) * s
    half = n // 2
    p1 = np.empty(n)
    p2 = np.empty(n)
    # same side: copy the sign of one draw onto the other
    sgn = np.where(w[:half] > 0.5, 1.0, -1.0)
    p1[:half] = sgn * np.maximum(p_hi * w[:half], 1e-6)
    p2[:half] = sgn * np.maximum(p_hi * x[:half], 1e-6)
    # straddling: strictly opposite signs
    p1[half:] = np.maximum(p_hi * w[half:], 1e-6)
    p2[half:] = -np.maximum(p_hi * x[half:], 1e-6)
    return q1, p1, q2, p2, t


def check_one_sided_lipschitz(
    params: Params,
    pivot: PivotLaw,
    grid: SampleGrid,
    l_est: float,
    fingerprint: str = "",
) -> CheckReport:
    """(x - y) . (f(x,t) - f(y,t)) <= l_est |x - y|^2 over sampled pairs.

    Straddling pairs exercise the jump term, which must only help (its
    contribution is non-positive).  Reports the smallest constant that
    would have sufficed on the sample.
    """
    if not (l_est > 0):
        raise ValueError("l_est must be positive")
    q1, p1, q2, p2, t = _pair_sets(params, grid, fingerprint or "default")
    f1q, f1p = _field_arrays(params, pivot, q1, p1, t)
    f2q, f2p = _field_arrays(params, pivot, q2, p2, t)
    dq = q1 - q2
    dp = p1 - p2
    dot = dq * (f1q - f2q) + dp * (f1p - f2p)
    nsq = dq * dq + dp * dp
    ratio = dot / nsq
    worst = int(np.argmax(ratio))
    sufficient = float(np.max(ratio))
    violations = int(np.count_nonzero(ratio > l_est))
    return CheckReport(
        name="one_sided_lipschitz",
        passed=violations == 0,
        margin=float(l_est - sufficient),
        worst_case={
            "q1": float(q1[worst]),
            "p1": float(p1[worst]),
            "q2": float(q2[worst]),
            "p2": float(p2[worst]),
            "t": float(t[worst]),
        },
        estimated_constant=sufficient,
        details={"l_est": l_est, "violations": violations, "pairs": len(ratio)},
    )


def check_continuous_dependence(
    params: Params,
    pivot: PivotLaw,
    base_ic: State,
    horizon: float,
    deltas: list[float],
    tol: Tolerances | None = None,
) -> CheckReport:
    """Sup-norm distance of perturbed trajectories must shrink with the
    perturbation radius (non-strict monotonicity, 10% slack)."""
    if len(deltas) == 0 or any(d < 0 for d in deltas):
        raise ValueError("deltas must be non-negative")
    if any(deltas[i + 1] >= deltas[i] for i in range(len(deltas) - 1)):
        raise ValueError("deltas must be strictly decreasing")
    if tol is None:
        tol = Tolerances()
    grid = list(np.linspace(base_ic.t, horizon, 257))
    base = integrate(base_ic, params, pivot, horizon, tol, record_at=grid)
    base_qp = np.array([(s.q, s.p) for s in base.recorded])
    directions = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
    eps = []
    for d in deltas:
        worst = 0.0
        for eq, ep in directions:
            ic = State(q=base_ic.q + d * eq, p=base_ic.p + d * ep, t=base_ic.t)
            traj = integrate(ic, params, pivot, horizon, tol, record_at=grid)
            qp = np.array([(s.q, s.p) for s in traj.recorded])
            dist = float(np.max(np.hypot(*(qp - base_qp).T)))
            worst = max(worst, dist)
        eps.append(worst if d > 0 else 0.0)
    monotone = all(eps[i + 1] <= eps[i] * 1.10 for i in range(len(eps) - 1))
    ratios = [e / d for e, d in zip(eps, deltas) if d > 0]
    return CheckReport(
        name="continuous_dependence",
        passed=monotone,
        margin=min(
            (eps[i] * 1.10 - eps[i + 1] for i in range(len(eps) - 1)), default=0.0
        ),
        worst_case={"delta": deltas[-1], "epsilon": eps[-1]},
        estimated_constant=max(ratios) if ratios else None,
        details={"deltas": list(deltas), "epsilons": eps, "growth_ratios": ratios},
    )


def check_upper_semicontinuity(
    params: Params,
    pivot: PivotLaw,
    q: float,
    t: float,
    p_sequence: list[float],
) -> CheckReport:
    """One-sided Hausdorff excess of F(q, p_k, t) over F(q, 0, t) must
    vanish as p_k -> 0, at a rate bounded by a line through the samples."""
    if any(abs(p_sequence[i + 1]) >= abs(p_sequence[i]) for i in range(len(p_sequence) - 1)):
        raise ValueError("p_sequence must strictly decrease in magnitude")
    if any(p == 0.0 for p in p_sequence):
        raise ValueError("p_sequence must avoid 0")
    f_plus, f_minus = limit_fields(params, pivot, q, t)
    f_plus, f_minus = float(f_plus), float(f_minus)
    betas = []
    for p_k in p_sequence:
        _, dp = _field_arrays(params, pivot, np.array([q]), np.array([p_k]), np.array([t]))
        a = float(dp[0])
        overshoot = max(0.0, f_plus - a, a - f_minus)
        betas.append(math.hypot(p_k, overshoot))
    slope = max(b / abs(p) for b, p in zip(betas, p_sequence))
    monotone = all(betas[i + 1] <= betas[i] * 1.10 for i in range(len(betas) - 1))
    within_line = all(b <= slope * abs(p) * (1 + 1e-12) for b, p in zip(betas, p_sequence))
    passed = monotone and within_line and betas[-1] <= slope * abs(p_sequence[-1]) * (1 + 1e-12)
    return CheckReport(
        name="upper_semicontinuity",
        passed=passed,
        margin=-betas[-1],
        worst_case={"q": q, "t": t, "p": p_sequence[-1], "beta": betas[-1]},
        estimated_constant=slope,
        details={"p_sequence": list(p_sequence), "betas": betas},
    )


def summary_table(reports: list[CheckReport]) -> str:
    lines = [f"{'check':<26} {'passed':<8} {'margin':<14} constant"]
    for r in reports:
        const = "-" if r.estimated_constant is None else f"{r.estimated_constant:.6g}"
        lines.append(f"{r.name:<26} {str(r.passed):<8} {r.margin:<14.6g} {const}")
    return "\n".join(lines)


def reports_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)
