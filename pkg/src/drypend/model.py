"""Pendulum-on-a-sliding-pivot model with Coulomb friction.

State is the angle q measured from the horizontal (q = 0 and q = pi are the
horizontal positions) and the angular velocity p.  Off the surface p = 0 the
motion is the smooth ODE

    dq/dt = p
    dp/dt = (a(t)/l) sin q - (mu/l) |a(t) cos q - l p^2 + g sin q| sign(p)
            - (g/l) cos q

where a(t) is the prescribed horizontal pivot acceleration.  On p = 0 the
friction term is set-valued and the right-hand side becomes the convex
interval between the two one-sided limits; `limit_fields`, `filippov_set`
and `stiction_holds` expose that structure.

All functions accept scalars or numpy arrays in the (q, p, t) slots.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Mode labels; these exact strings go into CSV output.
SLIPPING = "slip"
STUCK = "stuck"


@dataclass(frozen=True)
class Params:
    """Physical constants: rod length l, bob mass m, gravity g, friction mu."""

    l: float = 1.0
    m: float = 1.0
    g: float = 9.8
    mu: float = 0.5

    def __post_init__(self):
        if not (self.l > 0):
            raise ValueError(f"l must be positive, got {self.l}")
        if not (self.m > 0):
            raise ValueError(f"m must be positive, got {self.m}")
        if not (self.g > 0):
            raise ValueError(f"g must be positive, got {self.g}")
        if not (self.mu >= 0):
            raise ValueError(f"mu must be >= 0, got {self.mu}")

    def to_dict(self) -> dict:
        return {"l": self.l, "m": self.m, "g": self.g, "mu": self.mu}


class PivotLaw:
    """Prescribed pivot acceleration a(t), Lipschitz in t.

    Subclasses provide `accel`, an exact or conservative `sup_bound` and a
    Lipschitz constant `lipschitz_bound`.  `sup_bound` must over-estimate
    max |a| on the interval: the velocity trap threshold computed from it is
    only valid as an upper bound.
    """

    kind = "abstract"

    def accel(self, t):
        raise NotImplementedError

    @property
    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def sup_bound(self, t0: float, t1: float) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def check_sup_bound(self, t0: float, t1: float, n: int = 1001) -> bool:
        """Sampled sanity check that sup_bound dominates |accel| on [t0, t1]."""
        ts = np.linspace(t0, t1, n)
        return bool(np.all(np.abs(self.accel(ts)) <= self.sup_bound(t0, t1) + 1e-12))


class ConstantPivot(PivotLaw):
    """a(t) = a0."""

    kind = "constant"

    def __init__(self, a: float = 0.0):
        self.a = float(a)

    def accel(self, t):
        return self.a * np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else self.a

    @property
    def lipschitz_bound(self) -> float:
        return 0.0

    def sup_bound(self, t0, t1):
        return abs(self.a)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


class SinePivot(PivotLaw):
    """a(t) = amp * sin(omega * t + phase)."""

    kind = "sine"

    def __init__(self, amp: float, omega: float, phase: float = 0.0):
        self.amp = float(amp)
        self.omega = float(omega)
        self.phase = float(phase)

    def accel(self, t):
        if np.ndim(t):
            return self.amp * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)
        return self.amp * math.sin(self.omega * t + self.phase)

    @property
    def lipschitz_bound(self) -> float:
        return abs(self.amp * self.omega)

    def sup_bound(self, t0, t1):
        if t1 < t0:
            raise ValueError("empty interval")
        if self.omega == 0.0:
            return abs(self.amp * math.sin(self.phase))
        lo = self.omega * t0 + self.phase
        hi = self.omega * t1 + self.phase
        if lo > hi:
            lo, hi = hi, lo
        if hi - lo >= math.pi:
            return abs(self.amp)
        # |sin| peaks at odd multiples of pi/2; otherwise at the endpoints
        k = math.ceil((lo - math.pi / 2) / math.pi)
        if lo <= math.pi / 2 + k * math.pi <= hi:
            return abs(self.amp)
        return abs(self.amp) * max(abs(math.sin(lo)), abs(math.sin(hi)))

    def to_dict(self):
        return {"kind": self.kind, "amp": self.amp, "omega": self.omega, "phase": self.phase}


class PolyPivot(PivotLaw):
    """a(t) = sum_k coeffs[k] * t^k, used on a bounded window [0, t_max].

    Polynomials are not globally Lipschitz, so the constant is taken over the
    declared window; scenarios must keep their horizon inside it.
    """

    kind = "poly"

    def __init__(self, coeffs: Sequence[float], t_max: float = 1000.0):
        if len(coeffs) == 0:
            raise ValueError("poly pivot needs at least one coefficient")
        if not (t_max > 0):
            raise ValueError("t_max must be positive")
        self.coeffs = tuple(float(c) for c in coeffs)
        self.t_max = float(t_max)
        self._poly = np.polynomial.Polynomial(self.coeffs)
        self._deriv = self._poly.deriv()

    def accel(self, t):
        out = self._poly(np.asarray(t, dtype=float)) if np.ndim(t) else self._poly(t)
        return out

    @staticmethod
    def _abs_max(poly, a: float, b: float) -> float:
        cand = [a, b]
        deriv = poly.deriv()
        if deriv.degree() >= 1:
            for r in deriv.roots():
                if abs(r.imag) < 1e-12 and a <= r.real <= b:
                    cand.append(float(r.real))
        elif deriv.degree() == 0 and len(cand) == 0:  # pragma: no cover
            pass
        return max(abs(float(poly(c))) for c in cand)

    @property
    def lipschitz_bound(self) -> float:
        if self._deriv.degree() < 0 or (self._deriv.degree() == 0 and self._deriv.coef[0] == 0):
            return 0.0
        return self._abs_max(self._deriv, 0.0, self.t_max)

    def sup_bound(self, t0, t1):
        if t1 < t0:
            raise ValueError("empty interval")
        return self._abs_max(self._poly, t0, t1)

    def to_dict(self):
        return {"kind": self.kind, "coeffs": list(self.coeffs), "t_max": self.t_max}


class TablePivot(PivotLaw):
    """Tabulated samples with linear interpolation, clamped outside the knots.

    Piecewise-linear interpolation keeps the law Lipschitz with constant
    max |slope|, and the exact sup on any interval is attained at a knot or
    an interval endpoint.
    """

    kind = "table"

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.size < 2 or t.shape != v.shape:
            raise ValueError("table pivot needs matching 1-d times/values with >= 2 knots")
        if np.any(np.diff(t) <= 0):
            raise ValueError("table pivot times must be strictly increasing")
        self.times = t
        self.values = v

    def accel(self, t):
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(t) == 0 else out

    @property
    def lipschitz_bound(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.times))))

    def sup_bound(self, t0, t1):
        if t1 < t0:
            raise ValueError("empty interval")
        inside = self.values[(self.times >= t0) & (self.times <= t1)]
        cand = [abs(self.accel(t0)), abs(self.accel(t1))]
        if inside.size:
            cand.append(float(np.max(np.abs(inside))))
        return max(cand)

    def to_dict(self):
        return {"kind": self.kind, "times": self.times.tolist(), "values": self.values.tolist()}


def pivot_from_dict(spec: dict) -> PivotLaw:
    """Build a pivot law from its serialized form."""
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantPivot(spec["a"])
    if kind == "sine":
        return SinePivot(spec["amp"], spec["omega"], spec.get("phase", 0.0))
    if kind == "poly":
        return PolyPivot(spec["coeffs"], spec.get("t_max", 1000.0))
    if kind == "table":
        return TablePivot(spec["times"], spec["values"])
    raise ValueError(f"unknown pivot law kind: {kind!r}")


@dataclass(frozen=True)
class State:
    """Phase point (q, p) at time t plus the motion mode.

    q is stored unwrapped; any reduction modulo 2*pi is for display only.
    Stuck states have p = 0 exactly.
    """

    q: float
    p: float
    t: float
    mode: str = SLIPPING

    def __post_init__(self):
        if self.mode not in (SLIPPING, STUCK):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == STUCK and self.p != 0.0:
            raise ValueError("stuck state must have p = 0 exactly")


@dataclass(frozen=True)
class FilippovSet:
    """Convexified right-hand side at one phase point.

    q_dot is single-valued; the p_dot component is the closed interval
    [p_dot_lo, p_dot_hi], degenerate away from p = 0.
    """

    q_dot: float
    p_dot_lo: float
    p_dot_hi: float

    def __post_init__(self):
        if self.p_dot_lo > self.p_dot_hi:
            raise ValueError("p_dot_lo must not exceed p_dot_hi")

    @property
    def is_singleton(self) -> bool:
        return self.p_dot_lo == self.p_dot_hi


def normal_force_mag(params: Params, pivot: PivotLaw, q, p, t):
    """Magnitude of the rod constraint force: m |a(t) cos q - l p^2 + g sin q|."""
    a = pivot.accel(t)
    return params.m * np.abs(a * np.cos(q) - params.l * np.square(p) + params.g * np.sin(q))


def _accel_branch(params: Params, pivot: PivotLaw, q, p, t, branch):
    """dp/dt on one smooth branch, with the friction sign frozen to `branch`.

    This is the smooth extension of the slipping field across p = 0; the
    integrator steps it between events.
    """
    a = pivot.accel(t)
    l, g, mu = params.l, params.g, params.mu
    mag = np.abs(a * np.cos(q) - l * np.square(p) + g * np.sin(q))
    return (a / l) * np.sin(q) - (mu / l) * mag * branch - (g / l) * np.cos(q)


def accel_slipping(params: Params, pivot: PivotLaw, q, p, t):
    """dp/dt for p != 0 (friction sign taken from p)."""
    if np.any(np.asarray(p) == 0.0):
        raise ValueError("accel_slipping is undefined at p = 0; use filippov_set")
    return _accel_branch(params, pivot, q, p, t, np.sign(p))


def limit_fields(params: Params, pivot: PivotLaw, q, t):
    """One-sided limits (f_plus_p, f_minus_p) of dp/dt on the plane p = 0.

    f_plus_p is the limit from p > 0, f_minus_p from p < 0; always
    f_plus_p <= f_minus_p, the gap being twice the friction bound.
    """
    a = pivot.accel(t)
    l, g, mu = params.l, params.g, params.mu
    drift = (a / l) * np.sin(q) - (g / l) * np.cos(q)
    bound = (mu / l) * np.abs(a * np.cos(q) + g * np.sin(q))
    return drift - bound, drift + bound


def filippov_set(params: Params, pivot: PivotLaw, state: State) -> FilippovSet:
    """Convexified right-hand side at `state`; an interval only on p = 0."""
    if state.p != 0.0:
        a = float(accel_slipping(params, pivot, state.q, state.p, state.t))
        return FilippovSet(q_dot=state.p, p_dot_lo=a, p_dot_hi=a)
    f_plus, f_minus = limit_fields(params, pivot, state.q, state.t)
    return FilippovSet(q_dot=0.0, p_dot_lo=float(f_plus), p_dot_hi=float(f_minus))


def stiction_drift_and_bound(params: Params, pivot: PivotLaw, q, t):
    """Drift dp/dt and friction capacity on p = 0 (release when |drift| > bound)."""
    a = pivot.accel(t)
    l, g, mu = params.l, params.g, params.mu
    drift = (a * np.sin(q) - g * np.cos(q)) / l
    bound = (mu / l) * np.abs(a * np.cos(q) + g * np.sin(q))
    return drift, bound


def stiction_holds(params: Params, pivot: PivotLaw, q, t):
    """True iff static friction can hold the pendulum at angle q at time t.

    Algebraically |a sin q - g cos q| <= mu |a cos q + g sin q|, which is the
    same as 0 being contained in [f_plus_p, f_minus_p].
    """
    drift, bound = stiction_drift_and_bound(params, pivot, q, t)
    return np.abs(drift) <= bound


def p_star(params: Params, pivot: PivotLaw, t0: float, t1: float) -> float:
    """Velocity trap threshold: |p| > p_star forces |p| to decrease on [t0, t1].

    Undefined in the frictionless limit; callers must supply their own
    velocity cap when mu = 0.
    """
    if params.mu <= 0.0:
        raise ValueError("p_star requires mu > 0")
    if not (t1 > t0):
        raise ValueError("p_star requires t1 > t0")
    sup = pivot.sup_bound(t0, t1)
    return math.sqrt((params.g + sup) * (1.0 + 1.0 / params.mu) / params.l)


def energy(params: Params, q, p):
    """Mechanical energy surrogate 0.5 l^2 p^2 + g l sin q (per unit mass).

    Conserved along solutions only when mu = 0 and the pivot is inertial
    (a(t) = 0); used as a drift oracle in that limit.
    """
    return 0.5 * params.l ** 2 * np.square(p) + params.g * params.l * np.sin(q)


def fingerprint_of(*parts: dict) -> str:
    """Stable short hash of a sequence of serializable dicts."""
    blob = json.dumps(list(parts), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
