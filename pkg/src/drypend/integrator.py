"""Event-driven time stepping for the friction pendulum.

Between events the slipping field is smooth, so it is advanced with an
embedded Dormand-Prince 5(4) pair whose quartic dense output doubles as the
event interpolant.  The friction sign is frozen per step (the smooth
extension of the current branch), steps are cut at roots of p so that no
accepted step straddles the switching surface, and the surface itself is
handled by classifying the one-sided limit fields: either the trajectory
crosses and is re-seeded on the far side, or it sticks and time is advanced
analytically at fixed angle until static friction is defeated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    SLIPPING,
    STUCK,
    Params,
    PivotLaw,
    State,
    _accel_branch,
    fingerprint_of,
    limit_fields,
    p_star,
    stiction_drift_and_bound,
    stiction_holds,
)

# Event kinds
CROSSING = "crossing"
STICK_ENTRY = "stick_entry"
STICK_RELEASE = "stick_release"
HORIZON = "horizon"
REGION_EXIT = "region_exit"

SIDE_LOW = "low"
SIDE_HIGH = "high"


class IntegrationError(RuntimeError):
    pass


class StepUnderflow(IntegrationError):
    """Required step fell below 1e-14 s; the problem is pathologically stiff
    for this explicit scheme or the tolerances are inconsistent."""


class ChatterLimit(IntegrationError):
    """More than the allowed number of events; tolerances almost certainly
    misconfigured (stick band too small relative to event width)."""


class TrapViolation(IntegrationError):
    """A produced trajectory violated the velocity trap |p| <= p_star."""


class BracketInvalid(ValueError):
    """locate_switch was handed a bracket without a switching point."""


@dataclass(frozen=True)
class Tolerances:
    """Step-size and event-localization controls.

    stick_band is the |p| half-width inside which a state is considered to
    be on the switching surface; it must dominate abs_tol by a safe margin
    so that projection onto p = 0 never fights the error control.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    event_tol: float = 1e-10
    stick_band: float = 1e-8
    max_dt: float = 0.05

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "event_tol", "stick_band", "max_dt"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be strictly positive")
        if self.stick_band < 10 * self.abs_tol:
            raise ValueError("stick_band must be at least 10 * abs_tol")

    def scaled(self, factor: float) -> "Tolerances":
        """Same controls with rel/abs/event tolerances tightened by `factor`."""
        return Tolerances(
            rel_tol=self.rel_tol / factor,
            abs_tol=self.abs_tol / factor,
            event_tol=self.event_tol / factor,
            stick_band=max(self.stick_band / factor, 10 * self.abs_tol / factor),
            max_dt=self.max_dt,
        )

    def to_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "event_tol": self.event_tol,
            "stick_band": self.stick_band,
            "max_dt": self.max_dt,
        }


@dataclass(frozen=True)
class Event:
    t: float
    q: float
    kind: str
    direction: int | None = None  # crossing / stick_release: sign of p after
    side: str | None = None  # region_exit: "low" | "high"

    def to_dict(self) -> dict:
        d = {"t": self.t, "q": self.q, "kind": self.kind}
        if self.direction is not None:
            d["direction"] = self.direction
        if self.side is not None:
            d["side"] = self.side
        return d


@dataclass
class Trajectory:
    """Time-ordered samples plus the switching events that separate them."""

    samples: list[tuple[float, float, float, str]] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    params_fingerprint: str = ""
    recorded: list[State] = field(default_factory=list)

    def append(self, t: float, q: float, p: float, mode: str):
        self.samples.append((t, q, p, mode))

    @property
    def t(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def q(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def p(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])

    @property
    def modes(self) -> list[str]:
        return [s[3] for s in self.samples]

    @property
    def final(self) -> State:
        t, q, p, mode = self.samples[-1]
        return State(q=q, p=p, t=t, mode=mode)

    def write_csv(self, fh):
        fh.write("t,q,p,mode\n")
        for t, q, p, mode in self.samples:
            fh.write(f"{t!r},{q!r},{p!r},{mode}\n")

    def to_csv(self) -> str:
        import io

        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @staticmethod
    def read_csv(fh) -> "Trajectory":
        header = fh.readline().strip()
        if header != "t,q,p,mode":
            raise ValueError(f"unexpected trajectory header: {header!r}")
        traj = Trajectory()
        for line in fh:
            if not line.strip():
                continue
            t, q, p, mode = line.strip().split(",")
            traj.append(float(t), float(q), float(p), mode)
        return traj

    def events_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.events], indent=2)


# --- Dormand-Prince 5(4) tableau with quartic dense output -----------------

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# difference between the 5th and 4th order weights (7 entries; last is the
# FSAL stage evaluated at the step end)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

_MIN_STEP = 1e-14
_MAX_EVENTS = 10 ** 6


@dataclass(frozen=True)
class DenseSegment:
    """Quartic interpolant of one accepted step on [t0, t0 + h]."""

    t0: float
    h: float
    q0: float
    p0: float
    cq: tuple[float, float, float, float]
    cp: tuple[float, float, float, float]

    def eval(self, theta: float) -> tuple[float, float]:
        th = theta
        acc_q = 0.0
        acc_p = 0.0
        # Horner in theta, highest power first
        for cqi, cpi in zip(reversed(self.cq), reversed(self.cp)):
            acc_q = acc_q * th + cqi
            acc_p = acc_p * th + cpi
        q = self.q0 + self.h * th * acc_q
        p = self.p0 + self.h * th * acc_p
        return q, p

    def eval_at(self, t: float) -> tuple[float, float]:
        return self.eval((t - self.t0) / self.h)

    @property
    def t1(self) -> float:
        return self.t0 + self.h


def _field(params: Params, pivot: PivotLaw, branch: float) -> Callable:
    l, g, mu = params.l, params.g, params.mu

    def f(t: float, q: float, p: float) -> tuple[float, float]:
        a = pivot.accel(t)
        mag = abs(a * math.cos(q) - l * p * p + g * math.sin(q))
        return p, (a / l) * math.sin(q) - (mu / l) * mag * branch - (g / l) * math.cos(q)

    return f


def _rk_step(f, t: float, q: float, p: float, h: float):
    """One DOPRI5 step: returns (q1, p1, err_q, err_p, K)."""
    kq = [0.0] * 7
    kp = [0.0] * 7
    kq[0], kp[0] = f(t, q, p)
    for i in range(1, 6):
        aq = q
        ap = p
        row = _A[i]
        for j, a_ij in enumerate(row):
            aq += h * a_ij * kq[j]
            ap += h * a_ij * kp[j]
        kq[i], kp[i] = f(t + _C[i] * h, aq, ap)
    q1 = q
    p1 = p
    for i in range(6):
        q1 += h * _B[i] * kq[i]
        p1 += h * _B[i] * kp[i]
    kq[6], kp[6] = f(t + h, q1, p1)
    err_q = 0.0
    err_p = 0.0
    for i in range(7):
        err_q += _E[i] * kq[i]
        err_p += _E[i] * kp[i]
    return q1, p1, h * err_q, h * err_p, (kq, kp)


def _dense_coeffs(kq, kp) -> tuple[tuple, tuple]:
    cq = []
    cp = []
    for col in range(4):
        sq = 0.0
        sp = 0.0
        for i in range(7):
            sq += kq[i] * _P[i][col]
            sp += kp[i] * _P[i][col]
        cq.append(sq)
        cp.append(sp)
    return tuple(cq), tuple(cp)


def _error_norm(err_q, err_p, q0, p0, q1, p1, tol: Tolerances) -> float:
    sq = tol.abs_tol + tol.rel_tol * max(abs(q0), abs(q1))
    sp = tol.abs_tol + tol.rel_tol * max(abs(p0), abs(p1))
    return math.sqrt(0.5 * ((err_q / sq) ** 2 + (err_p / sp) ** 2))


def _initial_step(f, t: float, q: float, p: float, tol: Tolerances) -> float:
    """Hairer-style starting step: scale off the field magnitude at t0."""
    dq, dp = f(t, q, p)
    d0 = math.hypot(q, p)
    d1 = math.hypot(dq, dp)
    scale = tol.abs_tol + tol.rel_tol * max(d0, 1.0)
    if d1 <= 1e-12:
        h = tol.max_dt
    else:
        h = 0.01 * scale ** 0.2 / max(d1, 1e-12) ** 0.2
        h = min(h, 0.1 * (1.0 + d0) / d1)
    return max(min(h, tol.max_dt), _MIN_STEP * 10)


@dataclass(frozen=True)
class StepResult:
    state: State
    segment: DenseSegment
    h_used: float
    h_next: float
    hit_switch: bool


def _poly_first_sign_change(seg: DenseSegment, sign0: float, theta_max: float = 1.0):
    """Smallest theta in (0, theta_max] where the dense p changes sign, or None.

    The quartic is scanned on a fixed subdivision; a transversal root cannot
    hide between scan points at the scales the step controller allows, and a
    grazing double root is caught later by the stick-band projection.
    """
    n = 16
    prev_theta = 0.0
    prev_p = seg.p0
    for i in range(1, n + 1):
        th = theta_max * i / n
        _, p = seg.eval(th)
        if p == 0.0 or (p > 0) != (prev_p > 0):
            return prev_theta, th
        prev_theta, prev_p = th, p
    return None


def _bisect_switch(seg: DenseSegment, tol: Tolerances, bracket) -> tuple[float, float, float]:
    """Bisect the dense interpolant for the p = 0 point inside `bracket`.

    Returns (t, q, p) with |p| <= stick_band / 10 and the time window
    narrowed below event_tol.
    """
    lo, hi = bracket
    _, p_lo = seg.eval(lo)
    target = tol.stick_band / 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, p_mid = seg.eval(mid)
        if (p_mid > 0) == (p_lo > 0) and p_mid != 0.0:
            lo, p_lo = mid, p_mid
        else:
            hi = mid
        if (hi - lo) * abs(seg.h) <= tol.event_tol:
            _, p_here = seg.eval(hi)
            if abs(p_here) <= target:
                break
    theta = hi
    q, p = seg.eval(theta)
    return seg.t0 + theta * seg.h, q, p


def step_smooth(
    state: State,
    params: Params,
    pivot: PivotLaw,
    tol: Tolerances,
    h: float | None = None,
    t_limit: float | None = None,
) -> StepResult:
    """One accepted adaptive step of the current smooth branch.

    The friction sign is frozen to sign(p) for the whole step.  If the dense
    polynomial of the accepted step brackets p = 0 the step is shortened to
    end on the surface (|p| <= stick_band / 10), so no returned step
    straddles a sign change.
    """
    if state.mode != SLIPPING:
        raise ValueError("step_smooth requires a slipping state")
    branch = 1.0 if state.p > 0 else (-1.0 if state.p < 0 else 0.0)
    if branch == 0.0 and params.mu != 0.0:
        raise ValueError("step_smooth requires p != 0 when mu > 0")
    f = _field(params, pivot, branch)
    t, q, p = state.t, state.q, state.p
    if h is None:
        h = _initial_step(f, t, q, p, tol)
    h = min(h, tol.max_dt)
    if t_limit is not None:
        h = min(h, t_limit - t)
    if h <= 0:
        raise ValueError("no room to step before t_limit")

    while True:
        q1, p1, err_q, err_p, (kq, kp) = _rk_step(f, t, q, p, h)
        err = _error_norm(err_q, err_p, q, p, q1, p1, tol)
        if err <= 1.0:
            break
        h *= max(0.2, 0.9 * err ** -0.2)
        if h < _MIN_STEP:
            raise StepUnderflow(f"step size underflow at t = {t}")
    factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
    h_next = min(h * factor, tol.max_dt)

    cq, cp = _dense_coeffs(kq, kp)
    seg = DenseSegment(t0=t, h=h, q0=q, p0=p, cq=cq, cp=cp)

    if params.mu != 0.0 and branch != 0.0:
        bracket = _poly_first_sign_change(seg, branch)
        if bracket is not None:
            t_sw, q_sw, p_sw = _bisect_switch(seg, tol, bracket)
            if t_sw > t:  # guard against a root at the very start of the step
                new = State(q=q_sw, p=p_sw, t=t_sw, mode=SLIPPING)
                return StepResult(state=new, segment=seg, h_used=t_sw - t, h_next=h_next, hit_switch=True)
    new = State(q=q1, p=p1, t=t + h, mode=SLIPPING)
    return StepResult(state=new, segment=seg, h_used=h, h_next=h_next, hit_switch=False)


def locate_switch(
    bracket: tuple[State, State],
    params: Params,
    pivot: PivotLaw,
    tol: Tolerances,
) -> State:
    """Localize the p = 0 point inside a one-step bracket.

    The bracket must come from a single smooth stretch: the step is redone
    at the recorded width to rebuild the dense interpolant, and the root is
    bisected on it down to event_tol.
    """
    s0, s1 = bracket
    if s1.t <= s0.t:
        raise BracketInvalid("bracket must advance in time")
    sign_change = (s0.p > 0) != (s1.p > 0) or s1.p == 0.0
    enters_band = abs(s1.p) <= tol.stick_band
    if not (sign_change or enters_band):
        raise BracketInvalid("no sign change or stick-band entry across the bracket")
    branch = 1.0 if s0.p > 0 else -1.0
    f = _field(params, pivot, branch)
    h = s1.t - s0.t
    _, _, _, _, (kq, kp) = _rk_step(f, s0.t, s0.q, s0.p, h)
    cq, cp = _dense_coeffs(kq, kp)
    seg = DenseSegment(t0=s0.t, h=h, q0=s0.q, p0=s0.p, cq=cq, cp=cp)
    found = _poly_first_sign_change(seg, branch)
    if found is None:
        # tangential approach: take the closest-to-surface interpolant point
        best = min(
            (seg.eval(i / 128) + (i / 128,) for i in range(129)),
            key=lambda qpth: abs(qpth[1]),
        )
        q_m, p_m, th_m = best
        if abs(p_m) <= tol.stick_band / 10:
            return State(q=q_m, p=p_m, t=seg.t0 + th_m * seg.h, mode=SLIPPING)
        raise BracketInvalid("interpolant shows no switching point in the bracket")
    t_sw, q_sw, p_sw = _bisect_switch(seg, tol, found)
    return State(q=q_sw, p=p_sw, t=t_sw, mode=SLIPPING)


@dataclass(frozen=True)
class SwitchDecision:
    kind: str  # "stick" | "crossing"
    direction: int  # sign of p on the far side for crossings; 0 for stick


def classify_switch(params: Params, pivot: PivotLaw, q: float, t: float) -> SwitchDecision:
    """Stick/cross decision on the surface p = 0 from the limit fields.

    Sticking iff 0 lies between the one-sided limits (boundary equality
    counts as sticking; release detection then acts immediately).  Otherwise
    both limits share a sign and the crossing is transversal in that
    direction.
    """
    f_plus, f_minus = limit_fields(params, pivot, q, t)
    if f_plus <= 0.0 <= f_minus:
        return SwitchDecision(kind="stick", direction=0)
    return SwitchDecision(kind="crossing", direction=1 if f_plus > 0 else -1)


def _release_scan_step(params: Params, pivot: PivotLaw, q: float, tol: Tolerances) -> float:
    # margin(t) inherits the pivot's Lipschitz constant; refine the scan when
    # the law wiggles fast so short release windows are not skipped over
    l_margin = (pivot.lipschitz_bound / params.l) * (abs(math.sin(q)) + params.mu * abs(math.cos(q)))
    return min(tol.max_dt, 0.5 / (1.0 + l_margin))


def slide_until_release(
    state: State,
    params: Params,
    pivot: PivotLaw,
    horizon: float,
    tol: Tolerances,
) -> tuple[State, Event]:
    """Advance a stuck state at fixed angle until static friction fails.

    Returns the state at the release time together with a StickRelease event
    whose direction is the sign of the unbalanced drift, or the state at
    `horizon` with a HorizonReached event if friction holds throughout.
    The release time is the first root of |drift| - bound, located to
    event_tol; a constant pivot law makes the margin time-invariant, so a
    stuck state then holds to the horizon outright.
    """
    if state.mode != STUCK:
        raise ValueError("slide_until_release requires a stuck state")
    q, t0 = state.q, state.t

    def margin(t: float) -> float:
        drift, bound = stiction_drift_and_bound(params, pivot, q, t)
        return abs(drift) - bound

    if margin(t0) > 0:
        raise ValueError("slide_until_release requires stiction to hold at entry")

    if pivot.lipschitz_bound == 0.0:
        return (
            State(q=q, p=0.0, t=horizon, mode=STUCK),
            Event(t=horizon, q=q, kind=HORIZON),
        )

    dt = _release_scan_step(params, pivot, q, tol)
    t_lo = t0
    m_lo = margin(t_lo)
    while t_lo < horizon:
        t_hi = min(t_lo + dt, horizon)
        m_hi = margin(t_hi)
        if m_hi > 0.0:
            # bisect the first sign change; keep the released side on top
            lo, hi = t_lo, t_hi
            while hi - lo > tol.event_tol:
                mid = 0.5 * (lo + hi)
                if margin(mid) > 0.0:
                    hi = mid
                else:
                    lo = mid
            drift, _ = stiction_drift_and_bound(params, pivot, q, hi)
            direction = 1 if drift > 0 else -1
            released = State(q=q, p=0.0, t=hi, mode=STUCK)
            return released, Event(t=hi, q=q, kind=STICK_RELEASE, direction=direction)
        t_lo, m_lo = t_hi, m_hi
    return (
        State(q=q, p=0.0, t=horizon, mode=STUCK),
        Event(t=horizon, q=q, kind=HORIZON),
    )


def _guard_exit(seg: DenseSegment, theta_end: float, q_lo: float, q_hi: float):
    """Earliest theta in (0, theta_end] where the dense q leaves [q_lo, q_hi]."""
    n = 16
    prev_theta = 0.0
    prev_q = seg.q0
    for i in range(1, n + 1):
        th = theta_end * i / n
        qv, _ = seg.eval(th)
        if qv <= q_lo or qv >= q_hi:
            side = SIDE_LOW if qv <= q_lo else SIDE_HIGH
            bound = q_lo if side == SIDE_LOW else q_hi
            lo, hi = prev_theta, th
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                qm, _ = seg.eval(mid)
                out = qm <= q_lo if side == SIDE_LOW else qm >= q_hi
                if out:
                    hi = mid
                else:
                    lo = mid
            return hi, side
        prev_theta, prev_q = th, qv
    return None


def integrate(
    initial: State,
    params: Params,
    pivot: PivotLaw,
    horizon: float,
    tol: Tolerances | None = None,
    region_guard: tuple[float, float] | None = None,
    *,
    record_at: Sequence[float] | None = None,
    initial_dt: float | None = None,
    validate: bool = True,
) -> Trajectory:
    """Drive the mode machine from `initial` until `horizon` or a guard exit.

    Slipping stretches are advanced with `step_smooth`; each landing on
    p = 0 is classified into a crossing (re-seeded at half the stick band on
    the far side) or a stick entry (projected onto the surface and advanced
    with `slide_until_release`).  With a region guard set, integration stops
    with a RegionExit event the moment q leaves [q_lo, q_hi].

    The output is reproducible bit-for-bit for identical inputs.  When
    validate is true and mu > 0, the velocity trap (|p| can never re-exceed
    p_star once below it) is asserted on the finished trajectory.
    """
    if tol is None:
        tol = Tolerances()
    if not (horizon > initial.t):
        raise ValueError("horizon must exceed the initial time")
    if region_guard is not None and not (region_guard[0] < region_guard[1]):
        raise ValueError("region_guard must be an ordered pair")

    traj = Trajectory(
        params_fingerprint=fingerprint_of(params.to_dict(), pivot.to_dict(), tol.to_dict())
    )
    rec_times = sorted(record_at) if record_at else []
    rec_idx = 0

    def record_upto(t_now: float, value_fn):
        nonlocal rec_idx
        while rec_idx < len(rec_times) and rec_times[rec_idx] <= t_now + 1e-18:
            rt = rec_times[rec_idx]
            q_r, p_r, mode_r = value_fn(rt)
            traj.recorded.append(State(q=q_r, p=p_r, t=rt, mode=mode_r))
            rec_idx += 1

    state = initial
    frictionless = params.mu == 0.0
    entry_event = None

    # normalize an on-surface start
    if not frictionless and state.mode == SLIPPING and abs(state.p) <= tol.stick_band:
        dec = classify_switch(params, pivot, state.q, state.t)
        if dec.kind == "stick":
            state = State(q=state.q, p=0.0, t=state.t, mode=STUCK)
            entry_event = Event(t=state.t, q=state.q, kind=STICK_ENTRY)
        else:
            state = State(
                q=state.q, p=dec.direction * tol.stick_band / 2, t=state.t, mode=SLIPPING
            )
    if state.mode == STUCK and not bool(stiction_holds(params, pivot, state.q, state.t)):
        dec = classify_switch(params, pivot, state.q, state.t)
        state = State(q=state.q, p=dec.direction * tol.stick_band / 2, t=state.t, mode=SLIPPING)
        entry_event = None

    traj.append(state.t, state.q, state.p, state.mode)
    record_upto(state.t, lambda rt: (state.q, state.p, state.mode))
    if entry_event is not None:
        traj.events.append(entry_event)

    # immediate guard violation; on the boundary itself only outward (or
    # resting) motion counts as already-out, since inward motion re-enters
    if region_guard is not None:
        q_lo, q_hi = region_guard
        out_low = state.q < q_lo or (state.q == q_lo and state.p <= 0.0)
        out_high = state.q > q_hi or (state.q == q_hi and state.p >= 0.0)
        if out_low or out_high:
            side = SIDE_LOW if out_low else SIDE_HIGH
            traj.events.append(Event(t=state.t, q=state.q, kind=REGION_EXIT, side=side))
            return traj

    h_next = initial_dt
    n_events = 0

    def bump_events():
        nonlocal n_events
        n_events += 1
        if n_events > _MAX_EVENTS:
            raise ChatterLimit("event count exceeded 1e6")

    while state.t < horizon:
        if state.mode == STUCK:
            q_stuck = state.q
            t_entry = state.t
            released, ev = slide_until_release(state, params, pivot, horizon, tol)
            # dense samples across the stuck stretch so gaps stay <= max_dt
            t_next_sample = t_entry + tol.max_dt
            while t_next_sample < released.t:
                traj.append(t_next_sample, q_stuck, 0.0, STUCK)
                t_next_sample += tol.max_dt
            record_upto(released.t, lambda rt: (q_stuck, 0.0, STUCK))
            traj.append(released.t, q_stuck, 0.0, STUCK)
            traj.events.append(ev)
            bump_events()
            if ev.kind == HORIZON:
                return _finish(traj, params, pivot, tol, horizon, validate)
            state = State(
                q=q_stuck,
                p=ev.direction * tol.stick_band / 2,
                t=released.t,
                mode=SLIPPING,
            )
            traj.append(state.t, state.q, state.p, state.mode)
            h_next = None
            continue

        # slipping
        res = step_smooth(state, params, pivot, tol, h=h_next, t_limit=horizon)
        seg = res.segment
        theta_end = res.h_used / seg.h if seg.h > 0 else 1.0

        exit_hit = None
        if region_guard is not None:
            exit_hit = _guard_exit(seg, theta_end, region_guard[0], region_guard[1])
        if exit_hit is not None:
            theta_x, side = exit_hit
            t_x = seg.t0 + theta_x * seg.h
            q_x, p_x = seg.eval(theta_x)
            record_upto(t_x, lambda rt: (*seg.eval_at(rt), SLIPPING))
            traj.append(t_x, q_x, p_x, SLIPPING)
            traj.events.append(Event(t=t_x, q=q_x, kind=REGION_EXIT, side=side))
            bump_events()
            return _finish(traj, params, pivot, tol, horizon, validate)

        record_upto(res.state.t, lambda rt: (*seg.eval_at(rt), SLIPPING))
        state = res.state
        h_next = res.h_next

        if res.hit_switch:
            dec = classify_switch(params, pivot, state.q, state.t)
            if dec.kind == "stick":
                state = State(q=state.q, p=0.0, t=state.t, mode=STUCK)
                traj.append(state.t, state.q, 0.0, STUCK)
                traj.events.append(Event(t=state.t, q=state.q, kind=STICK_ENTRY))
                bump_events()
            else:
                traj.append(state.t, state.q, state.p, SLIPPING)
                traj.events.append(
                    Event(t=state.t, q=state.q, kind=CROSSING, direction=dec.direction)
                )
                bump_events()
                state = State(
                    q=state.q,
                    p=dec.direction * tol.stick_band / 2,
                    t=state.t,
                    mode=SLIPPING,
                )
                traj.append(state.t, state.q, state.p, state.mode)
            h_next = None
            continue

        traj.append(state.t, state.q, state.p, state.mode)
        if (
            not frictionless
            and abs(state.p) < tol.stick_band
            and bool(stiction_holds(params, pivot, state.q, state.t))
        ):
            state = State(q=state.q, p=0.0, t=state.t, mode=STUCK)
            traj.append(state.t, state.q, 0.0, STUCK)
            traj.events.append(Event(t=state.t, q=state.q, kind=STICK_ENTRY))
            bump_events()
            h_next = None

    traj.events.append(Event(t=state.t, q=state.q, kind=HORIZON))
    return _finish(traj, params, pivot, tol, horizon, validate)


def _finish(traj, params, pivot, tol, horizon, validate):
    if validate and params.mu > 0.0:
        check_escape_trap(traj, params, pivot, horizon, raise_on_fail=True)
    return traj


def check_escape_trap(
    traj: Trajectory,
    params: Params,
    pivot: PivotLaw,
    horizon: float,
    slack: float = 1e-6,
    raise_on_fail: bool = False,
) -> bool:
    """Verify that |p| never re-exceeds p_star (+slack) once it dips below it."""
    if params.mu <= 0.0:
        return True
    t0 = traj.samples[0][0]
    if not (horizon > t0):
        return True
    cap = p_star(params, pivot, t0, horizon)
    below = False
    for t, q, p, mode in traj.samples:
        if abs(p) <= cap:
            below = True
        elif below and abs(p) > cap + slack:
            if raise_on_fail:
                raise TrapViolation(
                    f"|p| = {abs(p)} exceeded p_star = {cap} at t = {t} after entering the trap"
                )
            return False
    return True


def trajectory_residuals(traj: Trajectory, params: Params, pivot: PivotLaw) -> float:
    """Midpoint-rule residual of consecutive sample pairs between events.

    Samples straddling an event or inside stuck stretches are skipped; the
    rest must be consistent with the single smooth branch to O(dt^2).
    """
    event_times = sorted(e.t for e in traj.events)
    worst = 0.0
    for (t0, q0, p0, m0), (t1, q1, p1, m1) in zip(traj.samples, traj.samples[1:]):
        if m0 != SLIPPING or m1 != SLIPPING:
            continue
        dt = t1 - t0
        if dt <= 1e-12:
            continue
        if any(t0 < te < t1 for te in event_times):
            continue
        if (p0 > 0) != (p1 > 0):
            continue
        branch = 1.0 if p0 > 0 else -1.0
        tm = 0.5 * (t0 + t1)
        qm = 0.5 * (q0 + q1)
        pm = 0.5 * (p0 + p1)
        fq, fp = pm, float(_accel_branch(params, pivot, qm, pm, tm, branch))
        rq = abs((q1 - q0) / dt - fq)
        rp = abs((p1 - p0) / dt - fp)
        scale = dt * dt * (1.0 + abs(fp))
        worst = max(worst, max(rq, rp) / scale if scale > 0 else 0.0)
    return worst
