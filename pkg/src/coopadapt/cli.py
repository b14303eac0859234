"""Scenario-driven command line: validate, run, sweep, pe-report.

Runs are batch and post-analyzed: timeseries.csv is the interface to
external plotters, summary.json carries the scalar outcomes, and
scenario.resolved lets any run be reproduced exactly.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from coopadapt.dynamics import PARAM_LABELS, PlanarKernel, _unit_param_rows
from coopadapt.excitation import GramianWindow
from coopadapt.network import joint_connectivity_check
from coopadapt.sim.engine import TimeSeries, run
from coopadapt.sim.scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    save_resolved,
    scenario_from_dict,
    validate_scenario,
)
from coopadapt.sim.trajectories import resolve_trajectory


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except (ScenarioError, FileNotFoundError, yaml.YAMLError) as exc:
        raise SystemExit(f"error: {exc}")


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    issues = validate_scenario(scenario)
    if issues:
        print(f"scenario {scenario.name!r}: INVALID")
        for msg in issues:
            print(f"  - {msg}")
        return 1
    print(f"scenario {scenario.name!r}: ok")
    print(f"  robots: {scenario.n_robots}, regime: {scenario.regime}, "
          f"duration: {scenario.duration_s} s @ {scenario.step_s} s")
    if scenario.regime == "delayed":
        steps = int(round(scenario.delay_s / scenario.step_s))
        print(f"  delay: {scenario.delay_s} s = {steps} steps")
    if scenario.regime == "switching" and scenario.schedule is not None:
        reports = joint_connectivity_check(scenario.schedule, scenario.n_robots, scenario.duration_s)
        print(f"  switching windows: {len(reports)}, all union graphs connected")
    return 0


def _write_outputs(result, out: Path, scenario: Scenario) -> None:
    out.mkdir(parents=True, exist_ok=True)
    result.timeseries.to_csv(out / "timeseries.csv")
    save_resolved(scenario, out / "scenario.resolved")
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.decimate is not None:
        scenario = scenario.with_overrides(log_decimation=args.decimate)
    issues = validate_scenario(scenario)
    if issues:
        print("error: scenario invalid:", file=sys.stderr)
        for msg in issues:
            print(f"  - {msg}", file=sys.stderr)
        return 1
    result = run(scenario)
    _write_outputs(result, Path(args.out), scenario)
    if result.diverged:
        print(f"run DIVERGED: {result.summary.get('divergence_reason', '')} "
              f"(partial logs kept in {args.out})", file=sys.stderr)
        return 1
    print(f"run ok: {args.out} ({result.summary['wall_time_s']:.1f} s wall, "
          f"final rel param error {result.summary['final_param_error_rel']:.3e})")
    return 0


def _parse_grid(specs: list[str]) -> list[tuple[str, list]]:
    grid = []
    for spec in specs:
        if "=" not in spec:
            raise SystemExit(f"error: malformed grid spec {spec!r} (expected key=v1,v2,...)")
        key, _, vals = spec.partition("=")
        values = []
        for tok in vals.split(","):
            tok = tok.strip()
            if not tok:
                raise SystemExit(f"error: empty value in grid spec {spec!r}")
            try:
                values.append(json.loads(tok))
            except json.JSONDecodeError:
                values.append(tok)
        grid.append((key.strip(), values))
    if not grid:
        raise SystemExit("error: sweep needs at least one --grid spec")
    return grid


def _apply_override(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def cmd_sweep(args) -> int:
    with open(args.scenario, "r", encoding="utf-8") as fh:
        base_doc = yaml.safe_load(fh)
    grid = _parse_grid(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in grid]
    index = []
    failed = 0
    for idx, combo in enumerate(itertools.product(*(vals for _, vals in grid))):
        doc = json.loads(json.dumps(base_doc))  # deep copy
        for key, val in zip(keys, combo):
            _apply_override(doc, key, val)
        try:
            scenario = scenario_from_dict(doc)
        except ScenarioError as exc:
            raise SystemExit(f"error: grid point {combo}: {exc}")
        tag = "__".join(f"{k.split('.')[-1]}={v}" for k, v in zip(keys, combo))
        run_dir = out / f"pt{idx:03d}__{tag}"
        issues = validate_scenario(scenario)
        if issues:
            index.append({"dir": run_dir.name, "point": dict(zip(keys, combo)),
                          "status": "invalid", "issues": issues})
            failed += 1
            continue
        result = run(scenario)
        _write_outputs(result, run_dir, scenario)
        index.append({
            "dir": run_dir.name,
            "point": dict(zip(keys, combo)),
            "status": "diverged" if result.diverged else "ok",
            "final_param_error_rel": result.summary.get("final_param_error_rel"),
            "consensus_max_final": result.summary.get("final", {}).get("consensus_max"),
        })
        if result.diverged:
            failed += 1
        print(f"{run_dir.name}: {index[-1]['status']}")
    with open(out / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 1 if failed else 0


def pe_report_from_logs(scenario: Scenario, columns: dict) -> dict:
    """Recompute windowed excitation metrics from a decimated run log.

    The regressors are rebuilt from the logged joint states and the
    scenario's reference trajectories at the logged instants, so the report
    uses the logged rate rather than the integration rate.
    """
    ts = columns["t"]
    if ts.shape[0] < 2:
        raise ScenarioError("timeseries is too short for a report")
    log_step = float(ts[1] - ts[0])
    lam = scenario.lambda_per_s
    report = {"window_s": scenario.pe_window_s, "robots": [], "collective_lambda_min": None}
    windows = []
    for r, rob in enumerate(scenario.robots):
        n = rob.model.n_links
        Q = np.stack([columns[f"r{r}_q{j}"] for j in range(n)], axis=1)
        QD = np.stack([columns[f"r{r}_qd{j}"] for j in range(n)], axis=1)
        traj = resolve_trajectory(rob.trajectory, rob.model)
        refq, refqd, refqdd = traj.sample(ts)
        qt = Q - refq
        qtd = QD - refqd
        qr_d = refqd - lam * qt
        qr_dd = refqdd - lam * qtd
        kern = PlanarKernel(rob.model.link_lengths, rob.model.joint_offsets, rob.model.gravity)
        A = _unit_param_rows(rob.model, [rob.model.payload_index])
        H, C, g = kern.terms(Q, QD, A)
        cols = (
            np.einsum("tpij,tj->tpi", H, qr_dd)
            + np.einsum("tpij,tj->tpi", C, qr_d) + g
        )  # (T, 4, n)
        win = GramianWindow(scenario.pe_window_s, log_step, dim=4)
        for k in range(ts.shape[0]):
            win.push(cols[k].T)
        windows.append(win)
        M = win.integral()
        w, vec = np.linalg.eigh(M)
        deficient = [PARAM_LABELS[int(np.argmax(np.abs(vec[:, i])))]
                     for i in range(4) if w[i] < 1e-6 * max(w[-1], 1e-300)]
        report["robots"].append({
            "lambda_min": float(max(w[0], 0.0)),
            "lambda_max": float(w[-1]),
            "deficient_directions": deficient,
        })
    total = sum(w.integral() for w in windows)
    report["collective_lambda_min"] = float(max(np.linalg.eigvalsh(total)[0], 0.0))
    return report


def cmd_pe_report(args) -> int:
    run_dir = Path(args.run)
    scenario = _load(str(run_dir / "scenario.resolved"))
    columns = TimeSeries.read_csv_columns(run_dir / "timeseries.csv")
    report = pe_report_from_logs(scenario, columns)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopadapt",
                                description="cooperative adaptive-control simulations")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a scenario and write logs")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--decimate", type=int, default=None, help="override log decimation")
    r.add_argument("--seed", type=int, default=None,
                   help="reserved; current dynamics are deterministic")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the cross product of a parameter grid")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--grid", action="append", default=[],
                   help="dotted key and values, e.g. coupling.k_gain=0,1,5,20")
    s.add_argument("--seed", type=int, default=None,
                   help="reserved; current dynamics are deterministic")
    s.set_defaults(func=cmd_sweep)

    pe = sub.add_parser("pe-report", help="excitation report from a finished run directory")
    pe.add_argument("--run", required=True, help="directory written by `coopadapt run`")
    pe.set_defaults(func=cmd_pe_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
