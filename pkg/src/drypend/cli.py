"""Command line front end: scenario files in, artifacts out.

Scenario files are single JSON documents.  Every command echoes the fully
defaulted scenario next to its outputs so runs are self-describing, and all
artifacts carry the scenario fingerprint.  Outputs are written atomically.

Exit codes: 0 success / witness found; 2 validation or integration failure;
3 shooting finished inconclusive (bracket at the width floor, no witness).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .model import (
    ConstantPivot,
    Params,
    PivotLaw,
    State,
    energy,
    fingerprint_of,
    pivot_from_dict,
)
from .integrator import IntegrationError, Tolerances, integrate
from .verification import (
    CheckReport,
    SampleGrid,
    check_continuous_dependence,
    check_jump_inequality,
    check_one_sided_lipschitz,
    check_upper_semicontinuity,
    smooth_lipschitz_bound,
    summary_table,
)
from .wazewski import (
    CurveValidationError,
    PreconditionFailed,
    SigmaCurve,
    bisect_curve,
    family_sweep,
    sweep_json,
)
from .svgplot import phase_portrait_svg


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


_DEFAULT_TOL = {
    "rel_tol": 1e-9,
    "abs_tol": 1e-11,
    "event_tol": 1e-10,
    "stick_band": 1e-8,
    "max_dt": 0.05,
}


@dataclass
class Scenario:
    name: str
    params: Params
    pivot: PivotLaw
    initial: dict  # normalized point or curve spec
    horizon: float
    tolerances: Tolerances
    mode: str  # "closed" | "strict"

    @property
    def strict(self) -> bool:
        return self.mode == "strict"

    def normalized(self) -> dict:
        return {
            "name": self.name,
            "params": self.params.to_dict(),
            "pivot": self.pivot.to_dict(),
            "initial": self.initial,
            "horizon": self.horizon,
            "tolerances": self.tolerances.to_dict(),
            "mode": self.mode,
        }

    @property
    def fingerprint(self) -> str:
        return fingerprint_of(self.normalized())

    def initial_state(self) -> State:
        if self.initial["kind"] != "point":
            raise ValidationError("this command needs a point initial condition")
        return State(q=self.initial["q0"], p=self.initial["p0"], t=self.initial["t0"])

    def curves(self) -> list[SigmaCurve]:
        if self.initial["kind"] != "curve":
            raise ValidationError("this command needs a curve initial condition")
        spec = self.initial["sigma"]
        shifts = self.initial.get("family_shifts", [0.0])
        out = []
        for s in shifts:
            out.append(_build_curve(spec, shift=s))
        return out


def _build_curve(spec: dict, shift: float = 0.0) -> SigmaCurve:
    kind = spec.get("kind")
    try:
        if kind == "line":
            return SigmaCurve.line(shift=spec.get("shift", 0.0) + shift)
        if kind == "table":
            qs = spec["q"]
            ps = [v + shift for v in spec["p"]]
            name = "table" if shift == 0.0 else f"table{shift:+g}"
            return SigmaCurve.from_table(qs, ps, name=name)
    except CurveValidationError as exc:
        raise ValidationError(str(exc)) from exc
    raise ValidationError(f"unknown curve kind: {kind!r}")


def load_scenario(path: str) -> Scenario:
    """Read, default-fill and validate one scenario file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a JSON object")

    name = raw.get("name", os.path.splitext(os.path.basename(path))[0])
    try:
        params = Params(**raw.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"params: {exc}") from exc
    try:
        pivot = pivot_from_dict(raw.get("pivot", {"kind": "constant", "a": 0.0}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"pivot: {exc}") from exc

    tol_spec = dict(_DEFAULT_TOL)
    tol_spec.update(raw.get("tolerances", {}))
    try:
        tolerances = Tolerances(**tol_spec)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"tolerances: {exc}") from exc

    horizon = float(raw.get("horizon", 50.0))
    if not (horizon > 0):
        raise ValidationError("horizon must be positive")

    mode = raw.get("mode", "closed")
    if mode not in ("closed", "strict"):
        raise ValidationError(f"mode must be 'closed' or 'strict', got {mode!r}")

    initial = raw.get("initial")
    if not isinstance(initial, dict) or "kind" not in initial:
        raise ValidationError("initial must be an object with a 'kind'")
    if initial["kind"] == "point":
        norm_initial = {
            "kind": "point",
            "q0": float(initial["q0"]),
            "p0": float(initial.get("p0", 0.0)),
            "t0": float(initial.get("t0", 0.0)),
        }
    elif initial["kind"] == "curve":
        sigma = initial.get("sigma", {"kind": "line", "shift": 0.0})
        shifts = [float(s) for s in initial.get("family_shifts", [0.0])]
        for s in shifts:
            _build_curve(sigma, shift=s)  # raises ValidationError on bad curves
        norm_initial = {"kind": "curve", "sigma": sigma, "family_shifts": shifts}
    else:
        raise ValidationError(f"initial kind must be 'point' or 'curve', got {initial['kind']!r}")

    scen = Scenario(
        name=name,
        params=params,
        pivot=pivot,
        initial=norm_initial,
        horizon=horizon,
        tolerances=tolerances,
        mode=mode,
    )
    if not scen.pivot.check_sup_bound(0.0, horizon):
        raise ValidationError("pivot sup_bound fails to dominate |accel| on the horizon")
    return scen


def _write_atomic(path: str, data: str):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit_common(scen: Scenario, out_dir: str):
    _write_atomic(
        os.path.join(out_dir, "scenario.normalized.json"), _canonical_json(scen.normalized())
    )


def cmd_simulate(scen: Scenario, out_dir: str, svg: bool = False) -> int:
    state = scen.initial_state()
    try:
        traj = integrate(state, scen.params, scen.pivot, scen.horizon, scen.tolerances)
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return 2
    _emit_common(scen, out_dir)
    _write_atomic(os.path.join(out_dir, "trajectory.csv"), traj.to_csv())
    events = {
        "scenario": scen.name,
        "fingerprint": scen.fingerprint,
        "events": [e.to_dict() for e in traj.events],
    }
    _write_atomic(os.path.join(out_dir, "events.json"), _canonical_json(events))
    if svg:
        _write_atomic(
            os.path.join(out_dir, "phase.svg"), phase_portrait_svg(traj, title=scen.name)
        )
    if scen.params.mu == 0.0 and isinstance(scen.pivot, ConstantPivot) and scen.pivot.a == 0.0:
        e0 = float(energy(scen.params, traj.q[0], traj.p[0]))
        drift = float(np.max(np.abs(energy(scen.params, traj.q, traj.p) - e0)))
        rel = drift / max(abs(e0), 1e-30)
        print(f"energy drift (relative): {rel:.3e}")
    print(f"wrote {len(traj.samples)} samples, {len(traj.events)} events to {out_dir}")
    return 0


def _witness_payload(scen: Scenario, curve: SigmaCurve, result) -> dict:
    return {
        "scenario": scen.name,
        "fingerprint": scen.fingerprint,
        "curve": curve.name,
        **result.to_dict(),
    }


def cmd_shoot(scen: Scenario, out_dir: str) -> int:
    curves = scen.curves()
    if len(curves) > 1:  # a curve family is a sweep in disguise
        return cmd_sweep(scen, out_dir)
    curve = curves[0]
    try:
        result = bisect_curve(
            curve,
            scen.params,
            scen.pivot,
            scen.horizon,
            scen.tolerances,
            strict=scen.strict,
        )
    except (PreconditionFailed, IntegrationError) as exc:
        print(f"shooting failed: {exc}", file=sys.stderr)
        return 2
    _emit_common(scen, out_dir)
    _write_atomic(
        os.path.join(out_dir, "witness.json"), _canonical_json(_witness_payload(scen, curve, result))
    )
    if result.witness is not None:
        w = result.witness
        print(
            f"witness: {w.outcome} from q0={w.q0!r}, p0={w.p0!r} "
            f"over {w.horizon} s ({result.iterations} iterations)"
        )
        return 0
    print(
        f"inconclusive: bracket [{result.bracket[0]!r}, {result.bracket[1]!r}] "
        f"reached the width floor without a witness"
    )
    return 3


def cmd_sweep(scen: Scenario, out_dir: str) -> int:
    curves = scen.curves()
    try:
        entries = family_sweep(
            curves, scen.params, scen.pivot, scen.horizon, scen.tolerances, strict=scen.strict
        )
    except CurveValidationError as exc:
        print(f"sweep validation failed: {exc}", file=sys.stderr)
        return 2
    _emit_common(scen, out_dir)
    _write_atomic(os.path.join(out_dir, "sweep.json"), sweep_json(entries))
    found = sum(1 for e in entries if e.result is not None and e.result.witness is not None)
    print(f"{found}/{len(entries)} curves produced a witness")
    return 0 if found == len(entries) else 3


_CHECK_NAMES = ("jump", "lipschitz", "dependence", "semicontinuity")


def cmd_verify(scen: Scenario, out_dir: str, checks: list[str] | None = None) -> int:
    selected = checks or list(_CHECK_NAMES)
    unknown = [c for c in selected if c not in _CHECK_NAMES]
    if unknown:
        print(f"unknown checks: {', '.join(unknown)}", file=sys.stderr)
        return 2
    grid = SampleGrid.for_scenario(
        scen.fingerprint, t_range=(0.0, min(scen.horizon, 20.0))
    )
    reports: list[CheckReport] = []
    if "jump" in selected:
        reports.append(check_jump_inequality(scen.params, scen.pivot, grid))
    if "lipschitz" in selected:
        l_est = smooth_lipschitz_bound(
            scen.params, scen.pivot, p_max=4.0, t0=0.0, t1=min(scen.horizon, 20.0)
        )
        reports.append(
            check_one_sided_lipschitz(
                scen.params, scen.pivot, grid, l_est, fingerprint=scen.fingerprint
            )
        )
    if "dependence" in selected:
        if scen.initial["kind"] == "point":
            base = scen.initial_state()
        else:
            base = State(q=math.pi / 2, p=0.0, t=0.0)
        reports.append(
            check_continuous_dependence(
                scen.params,
                scen.pivot,
                base,
                horizon=min(scen.horizon, 5.0),
                deltas=[1e-6, 1e-8, 1e-10],
                tol=scen.tolerances,
            )
        )
    if "semicontinuity" in selected:
        reports.append(
            check_upper_semicontinuity(
                scen.params,
                scen.pivot,
                q=math.pi / 4,
                t=0.0,
                p_sequence=[2.0 ** -k for k in range(1, 20)],
            )
        )
    _emit_common(scen, out_dir)
    payload = {"scenario": scen.name, "fingerprint": scen.fingerprint}
    _write_atomic(
        os.path.join(out_dir, "verify.json"),
        _canonical_json({**payload, "reports": [r.to_dict() for r in reports]}),
    )
    print(summary_table(reports))
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="drypend",
        description="Friction pendulum simulation, shooting and verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "shoot", "sweep", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("scenario", help="path to a scenario JSON file")
        sp.add_argument("--out", default="out", help="output directory (default: ./out)")
        sp.add_argument("--horizon", type=float, default=None, help="override the horizon (s)")
        sp.add_argument("--strict", action="store_true", help="force strict (open-region) mode")
        if name == "simulate":
            sp.add_argument("--svg", action="store_true", help="also write a phase portrait")
        if name == "verify":
            sp.add_argument(
                "--checks", default=None, help="comma separated subset of: " + ",".join(_CHECK_NAMES)
            )
    args = parser.parse_args(argv)

    try:
        scen = load_scenario(args.scenario)
    except (ParseError, ValidationError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    if args.horizon is not None:
        if args.horizon <= 0:
            print("scenario error: horizon must be positive", file=sys.stderr)
            return 2
        scen.horizon = args.horizon
    if args.strict:
        scen.mode = "strict"

    try:
        if args.command == "simulate":
            return cmd_simulate(scen, args.out, svg=args.svg)
        if args.command == "shoot":
            return cmd_shoot(scen, args.out)
        if args.command == "sweep":
            return cmd_sweep(scen, args.out)
        if args.command == "verify":
            checks = args.checks.split(",") if args.checks else None
            return cmd_verify(scen, args.out, checks)
    except ValidationError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
