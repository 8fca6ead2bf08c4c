"""Command-line entry point: ``galerkin-control analyze|control|sweep``.

Exit codes
    0  success (analyze: certified chain; control: distance < epsilon and budget ok;
       sweep: every grid point produced a report)
    1  input error (unreadable or invalid config)
    2  resonance: violations found (analyze) or lifting failed (control)
    3  disconnected: target support unreachable from the initial state
    4  fidelity miss: achieved distance >= epsilon
    5  budget miss: L1 norm above the a-priori budget
    6  sweep: at least one grid point raised an error
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .approximation import ApproximatingFamily, uniform_bounds
from .compiler import schedule_to_csv
from .config import (
    ConfigError,
    LoadedModel,
    build_model,
    decode_state,
    experiment_settings,
    load_config,
    working_labels,
)
from .graph import build_graph, check_nonresonance
from .models import DeltaBoxModel, ResonanceLiftError, lift_resonances
from .pipeline import (
    DisconnectedError,
    ResonanceError,
    run_controllability_experiment,
    run_sweep,
    sweep_grid,
    working_system,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RESONANCE = 2
EXIT_DISCONNECTED = 3
EXIT_FIDELITY = 4
EXIT_BUDGET = 5
EXIT_SWEEP_ERRORS = 6

THREADS_ENV = "GALERKIN_CONTROL_THREADS"
VERBOSE_ENV = "GALERKIN_CONTROL_VERBOSE"
TRACE_MAX_ROWS = 20_000
DEFAULT_DELTA_TRUNCATION = 12

log = logging.getLogger("galerkin_control")


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n")


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite(payload):
    """Replace non-finite floats by None so reports stay strict JSON."""
    if isinstance(payload, dict):
        return {k: _finite(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [_finite(v) for v in payload]
    if isinstance(payload, float) and not math.isfinite(payload):
        return None
    return payload


def _truncation(cfg: dict, loaded: LoadedModel) -> int:
    if loaded.truncation:
        return loaded.truncation
    return max(3 * cfg.get("m", 4), DEFAULT_DELTA_TRUNCATION)


def _analysis_system(cfg: dict, loaded: LoadedModel, eta: float | None = None):
    settings = experiment_settings(cfg, loaded)
    model = loaded.model
    if eta is not None and isinstance(model, DeltaBoxModel):
        model = model.with_eta(eta)
    n = _truncation(cfg, loaded)
    m = min(cfg.get("m", n), n)
    return working_system(model, n, settings).truncate(m)


def _certify(system, gap_tolerance):
    graph = build_graph(system.coupling)
    report = check_nonresonance(system.spectrum, system.coupling, graph.edges, gap_tolerance)
    return graph, report


def cmd_analyze(args) -> int:
    """Connectivity and non-resonance certification of the planning levels."""
    cfg = load_config(args.config)
    loaded = build_model(cfg)
    gap_tol = float(cfg.get("gap_tolerance", 1e-9))
    system = _analysis_system(cfg, loaded)
    graph, report = _certify(system, gap_tol)
    labels = system.levels
    out = {
        "schema_version": 1,
        "levels": list(labels),
        "connected": report.connected,
        "components": [[labels[v] for v in comp] for comp in graph.components()],
        "certification": report.to_json(labels),
        "eta": getattr(loaded.model, "eta", 0.0),
        "lifted": False,
    }
    lift_wanted = cfg.get("lift", False)
    if not report.ok and lift_wanted and isinstance(loaded.model, DeltaBoxModel) and loaded.model.centered:
        if not report.connected and loaded.subspace == "full":
            log.info("full basis is disconnected; lifting cannot repair parity")
        else:
            try:
                lifted = lift_resonances(loaded.model, system.size, float(cfg.get("eta_max", 0.5)), gap_tol)
                system = _analysis_system(cfg, loaded, lifted.eta)
                graph, report = _certify(system, gap_tol)
                out.update(eta=lifted.eta, lifted=True, certification=report.to_json(labels), connected=report.connected)
            except ResonanceLiftError as exc:
                out["lift_error"] = str(exc)
    approx = cfg.get("approximation")
    if approx:
        family = ApproximatingFamily.rank_truncations(system.coupling, system.spectrum, min(approx["max_n"], system.size - 1))
        entry = {"residuals": list(family.residuals), "nonincreasing": family.is_nonincreasing()}
        if "mu" in approx:
            sysr = experiment_settings(cfg, loaded).r
            a, b, n0 = uniform_bounds(family, system.relative_bound_a, system.relative_bound_b, approx["mu"], sysr)
            entry["uniform_bounds"] = {"a": a, "b": b, "n0": n0}
        out["approximation"] = entry
    out["certified"] = report.ok
    payload = _finite(out)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _dump(args.out / "analysis.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK if report.ok else EXIT_RESONANCE


def _states(cfg: dict, loaded: LoadedModel):
    for key in ("psi0", "psi1"):
        if key not in cfg:
            raise ConfigError(f"field {key}: required for this subcommand")
    n = _truncation(cfg, loaded)
    labels = working_labels(loaded, n)
    parity = isinstance(loaded.model, DeltaBoxModel) and loaded.subspace == "even"
    return n, decode_state(cfg["psi0"], labels, "psi0", parity), decode_state(cfg["psi1"], labels, "psi1", parity)


def _write_trace(path: Path, report) -> None:
    times, states = report.trace_times, report.trace_states
    stride = max(1, math.ceil(len(times) / TRACE_MAX_ROWS))
    rows = list(range(0, len(times), stride))
    if rows[-1] != len(times) - 1:
        rows.append(len(times) - 1)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"p{k}" for k in report.levels])
        for i in rows:
            w.writerow([repr(float(times[i]))] + [repr(float(p)) for p in np.abs(states[i]) ** 2])


def _control_exit(report) -> int:
    if not report.fidelity_ok:
        return EXIT_FIDELITY
    if not report.budget_ok:
        return EXIT_BUDGET
    return EXIT_OK


def cmd_control(args) -> int:
    """Plan, compile and simulate one transfer; write report, schedule and trace."""
    cfg = load_config(args.config)
    loaded = build_model(cfg)
    n, psi0, psi1 = _states(cfg, loaded)
    settings = experiment_settings(cfg, loaded)
    settings = replace(settings, truncation=n)
    report = run_controllability_experiment(loaded.model, psi0, psi1, settings)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    payload = _finite(report.to_json())
    _dump(out / "report.json", payload)
    (out / "schedule.csv").write_text(schedule_to_csv(report.original_schedule))
    if report.eta > 0:
        (out / "schedule_lifted.csv").write_text(schedule_to_csv(report.schedule))
    _write_trace(out / "trace.csv", report)
    sim = payload["simulation"]
    log.info("distance %.6g fidelity %.9f l1 %.6g budget %.6g", sim["distance"], sim["fidelity"], payload["budget"]["l1"], payload["budget"]["budget"])
    print(json.dumps({"passed": report.passed, "distance": report.distance, "l1": payload["budget"]["l1"]}, sort_keys=True))
    return _control_exit(report)


AGGREGATE_COLUMNS = ["index", "u0", "samples_per_period", "truncation", "l1", "fidelity", "distance", "passed", "error", "runtime_s"]


def cmd_sweep(args) -> int:
    """Run the control experiment over a (u0, samples, truncation) grid."""
    cfg = load_config(args.config)
    loaded = build_model(cfg)
    n, psi0, psi1 = _states(cfg, loaded)
    settings = experiment_settings(cfg, loaded)
    settings = replace(settings, truncation=n)
    grid = cfg.get("grid", {})
    default_u0 = settings.u0 if settings.u0 is not None else min(0.1, settings.r / 2)
    points = sweep_grid(
        grid.get("u0", [default_u0]),
        grid.get("samples_per_period", [settings.samples_per_period]),
        grid.get("truncation", [n]),
    )
    # states were decoded at the base truncation; larger grid truncations pad with zeros
    outcomes = run_sweep(loaded.model, psi0, psi1, settings, points, args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    errors = 0
    with (out / "aggregate.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for o in outcomes:
            p = o.point
            if o.report is not None:
                _dump(out / f"report_{p.index:03d}.json", _finite(o.report))
                rep = o.report
                row = [rep["budget"]["l1"], rep["simulation"]["fidelity"], rep["simulation"]["distance"], rep["passed"], ""]
            else:
                errors += 1
                row = ["", "", "", False, o.error]
            w.writerow([p.index, p.u0, p.samples_per_period, p.truncation] + row + [f"{o.runtime_s:.6f}"])
    print(json.dumps({"points": len(outcomes), "errors": errors}, sort_keys=True))
    return EXIT_OK if errors == 0 else EXIT_SWEEP_ERRORS


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw in (None, ""):
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="galerkin-control", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_out in (
        ("analyze", cmd_analyze, False),
        ("control", cmd_control, True),
        ("sweep", cmd_sweep, True),
    ):
        p = sub.add_parser(name, help=func.__doc__)
        p.add_argument("--config", type=Path, required=True, help="JSON experiment config")
        p.add_argument("--out", type=Path, required=needs_out, help="output directory")
        p.add_argument("--threads", type=int, default=None, help=f"worker processes (env {THREADS_ENV})")
        p.add_argument("--verbose", "-v", action="count", default=0, help=f"more logging (env {VERBOSE_ENV})")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is None:
            args.threads = _env_int(THREADS_ENV)
        verbosity = args.verbose or (_env_int(VERBOSE_ENV) or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(
        level=logging.DEBUG if verbosity > 1 else logging.INFO if verbosity == 1 else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except DisconnectedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except ResonanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
