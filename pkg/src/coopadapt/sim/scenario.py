"""Declarative experiment descriptions: schema, defaults, validation, file io.

A scenario is a single YAML document with units spelled out in the key names
(lambda_per_s, delay_s, ...).  Loading materializes every default; the
resolved form round-trips through scenario_to_dict/scenario_from_dict so a
run can be reproduced exactly from its emitted scenario.resolved file.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import yaml

from coopadapt.dynamics import BodyParams, PlanarModel
from coopadapt.network import SwitchSchedule, joint_connectivity_check, _connected
from coopadapt.sim.trajectories import (
    JointSinusoidSpec,
    RotationOnlySpec,
    SinusoidTerm,
    TranslationOnlySpec,
    TrajectoryError,
    resolve_trajectory,
)

REGIMES = ("open_loop", "direct", "centralized", "consensus", "switching", "delayed")
COMPOSITE_KINDS = ("none", "torque", "energy", "both")


class ScenarioError(ValueError):
    """Scenario fails validation."""


@dataclass(frozen=True)
class RobotSetup:
    """One arm: model (payload truth attached), trajectory and initial state."""

    model: PlanarModel
    trajectory: object
    q0_rad: tuple[float, ...] | None = None
    qd0_rad: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    robots: tuple[RobotSetup, ...]
    duration_s: float
    step_s: float = 1e-3
    log_decimation: int = 10
    pe_window_s: float = 10.0
    lambda_per_s: float = 4.0
    kd_nms_per_rad: float = 4.0
    adaptation_gain: float | tuple[float, float, float, float] = 10.0
    robot_adaptation_gain: float | None = None
    a_hat0: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    regime: str = "direct"
    k_gain: float = 0.0
    edges: tuple[tuple[int, int], ...] = ()
    delay_s: float = 0.0
    schedule: SwitchSchedule | None = None
    composite_kind: str = "none"
    composite_gamma: float = 0.9
    composite_inject: bool = True

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.step_s))

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# dict <-> dataclass
# ---------------------------------------------------------------------------


def _body_from_dict(d) -> BodyParams:
    if "m_kg" in d:
        return BodyParams(m=float(d["m_kg"]), hx=float(d["hx_kgm"]),
                          hy=float(d["hy_kgm"]), izz=float(d["izz_kgm2"]))
    return BodyParams.from_com(
        float(d["mass_kg"]), tuple(float(v) for v in d["com_m"]), float(d["izz_com_kgm2"])
    )


def _body_to_dict(b: BodyParams) -> dict:
    return {"m_kg": b.m, "hx_kgm": b.hx, "hy_kgm": b.hy, "izz_kgm2": b.izz}


def _terms_from_list(lst):
    return tuple(
        SinusoidTerm(
            amplitude_rad=float(t["amplitude_rad"]),
            frequency_hz=float(t["frequency_hz"]),
            phase_rad=float(t.get("phase_rad", 0.0)),
        )
        for t in lst
    )


def _terms_to_list(terms):
    return [
        {"amplitude_rad": t.amplitude_rad, "frequency_hz": t.frequency_hz, "phase_rad": t.phase_rad}
        for t in terms
    ]


def _trajectory_from_dict(d):
    kind = d["kind"]
    if kind == "joint_sinusoid":
        return JointSinusoidSpec(
            joints=tuple(_terms_from_list(j["terms"]) for j in d["joints"]),
            offsets_rad=tuple(float(j.get("offset_rad", 0.0)) for j in d["joints"]),
        )
    if kind == "translation_only":
        return TranslationOnlySpec(
            center_m=tuple(float(v) for v in d["center_m"]),
            amplitude_m=tuple(float(v) for v in d["amplitude_m"]),
            frequency_hz=tuple(float(v) for v in d["frequency_hz"]),
            phase_rad=tuple(float(v) for v in d.get("phase_rad", (0.0, np.pi / 2))),
            orientation_rad=float(d.get("orientation_rad", 0.0)),
            elbow=d.get("elbow", "up"),
        )
    if kind == "rotation_only":
        return RotationOnlySpec(
            point_m=tuple(float(v) for v in d["point_m"]),
            orientation_offset_rad=float(d.get("orientation_offset_rad", 0.0)),
            terms=_terms_from_list(d["terms"]),
            elbow=d.get("elbow", "up"),
        )
    raise ScenarioError(f"unknown trajectory kind {kind!r}")


def _trajectory_to_dict(spec) -> dict:
    if isinstance(spec, JointSinusoidSpec):
        return {
            "kind": "joint_sinusoid",
            "joints": [
                {"offset_rad": off, "terms": _terms_to_list(terms)}
                for terms, off in zip(spec.joints, spec.offsets_rad)
            ],
        }
    if isinstance(spec, TranslationOnlySpec):
        return {
            "kind": "translation_only",
            "center_m": list(spec.center_m),
            "amplitude_m": list(spec.amplitude_m),
            "frequency_hz": list(spec.frequency_hz),
            "phase_rad": list(spec.phase_rad),
            "orientation_rad": spec.orientation_rad,
            "elbow": spec.elbow,
        }
    if isinstance(spec, RotationOnlySpec):
        return {
            "kind": "rotation_only",
            "point_m": list(spec.point_m),
            "orientation_offset_rad": spec.orientation_offset_rad,
            "terms": _terms_to_list(spec.terms),
            "elbow": spec.elbow,
        }
    raise TypeError(f"unknown trajectory spec {type(spec).__name__}")


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        payload = None if doc.get("payload") is None else _body_from_dict(doc["payload"])
        gravity = tuple(float(v) for v in doc.get("gravity_mps2", (0.0, 0.0)))
        robots = []
        for rd in doc["robots"]:
            links = rd["links"]
            lengths = tuple(float(l["length_m"]) for l in links)
            bodies = tuple(_body_from_dict(l) for l in links)
            offsets = tuple(float(l.get("joint_offset_rad", 0.0)) for l in links)
            model = PlanarModel(lengths, offsets, bodies, gravity=gravity)
            if payload is not None:
                off = rd.get("payload_offset_m", (lengths[-1], 0.0))
                model = model.with_payload(payload, offset=tuple(float(v) for v in off))
            robots.append(
                RobotSetup(
                    model=model,
                    trajectory=_trajectory_from_dict(rd["trajectory"]),
                    q0_rad=None if rd.get("q0_rad") is None else tuple(map(float, rd["q0_rad"])),
                    qd0_rad=None if rd.get("qd0_rad") is None else tuple(map(float, rd["qd0_rad"])),
                )
            )
        gains = doc.get("gains", {})
        est = doc.get("estimates", {})
        coup = doc.get("coupling", {})
        comp = doc.get("composite", {})
        sched = None
        if coup.get("schedule") is not None:
            sd = coup["schedule"]
            sched = SwitchSchedule.cyclic(
                tuple(tuple(tuple(map(int, e)) for e in s) for s in sd["edge_sets"]),
                dwell=float(sd["dwell_s"]),
            )
        return Scenario(
            name=str(doc.get("name", "scenario")),
            robots=tuple(robots),
            duration_s=float(doc["duration_s"]),
            step_s=float(doc.get("step_s", 1e-3)),
            log_decimation=int(doc.get("log_decimation", 10)),
            pe_window_s=float(doc.get("pe_window_s", 10.0)),
            lambda_per_s=float(gains.get("lambda_per_s", 4.0)),
            kd_nms_per_rad=float(gains.get("kd_nms_per_rad", 4.0)),
            adaptation_gain=(tuple(float(v) for v in gains["adaptation_gain"])
                             if isinstance(gains.get("adaptation_gain"), (list, tuple))
                             else float(gains.get("adaptation_gain", 10.0))),
            robot_adaptation_gain=(None if gains.get("robot_adaptation_gain") is None
                                   else float(gains["robot_adaptation_gain"])),
            a_hat0=tuple(float(v) for v in est.get("a_hat0", (0.0, 0.0, 0.0, 0.0))),
            regime=str(coup.get("regime", "direct")),
            k_gain=float(coup.get("k_gain", 0.0)),
            edges=tuple(tuple(map(int, e)) for e in coup.get("edges", ())),
            delay_s=float(coup.get("delay_s", 0.0)),
            schedule=sched,
            composite_kind=str(comp.get("kind", "none")),
            composite_gamma=float(comp.get("gamma", 0.9)),
            composite_inject=bool(comp.get("inject", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def scenario_to_dict(s: Scenario) -> dict:
    doc = {
        "name": s.name,
        "duration_s": s.duration_s,
        "step_s": s.step_s,
        "log_decimation": s.log_decimation,
        "pe_window_s": s.pe_window_s,
        "gravity_mps2": list(s.robots[0].model.gravity),
        "payload": None if s.robots[0].model.payload is None else _body_to_dict(s.robots[0].model.payload),
        "robots": [],
        "gains": {
            "lambda_per_s": s.lambda_per_s,
            "kd_nms_per_rad": s.kd_nms_per_rad,
            "adaptation_gain": (list(s.adaptation_gain)
                                if isinstance(s.adaptation_gain, tuple) else s.adaptation_gain),
            "robot_adaptation_gain": s.robot_adaptation_gain,
        },
        "estimates": {"a_hat0": list(s.a_hat0)},
        "coupling": {
            "regime": s.regime,
            "k_gain": s.k_gain,
            "edges": [list(e) for e in s.edges],
            "delay_s": s.delay_s,
            "schedule": None,
        },
        "composite": {
            "kind": s.composite_kind,
            "gamma": s.composite_gamma,
            "inject": s.composite_inject,
        },
    }
    if s.schedule is not None:
        doc["coupling"]["schedule"] = {
            "dwell_s": s.schedule.dwell,
            "edge_sets": [[list(e) for e in es] for es in s.schedule.edge_sets],
        }
    for r in s.robots:
        m = r.model
        links = []
        for i, b in enumerate(m.body_params):
            links.append({"length_m": m.link_lengths[i], "joint_offset_rad": m.joint_offsets[i],
                          **_body_to_dict(b)})
        doc["robots"].append(
            {
                "links": links,
                "payload_offset_m": list(m.payload_offset),
                "trajectory": _trajectory_to_dict(r.trajectory),
                "q0_rad": None if r.q0_rad is None else list(r.q0_rad),
                "qd0_rad": None if r.qd0_rad is None else list(r.qd0_rad),
            }
        )
    return doc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario file must contain a mapping")
    return scenario_from_dict(doc)


def save_resolved(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_scenario(scenario: Scenario) -> list[str]:
    """All reasons the scenario cannot run; empty when runnable."""
    issues: list[str] = []
    s = scenario
    if s.duration_s <= 0.0:
        issues.append("duration_s must be positive")
    if s.step_s <= 0.0:
        issues.append("step_s must be positive")
    if s.log_decimation < 1:
        issues.append("log_decimation must be >= 1")
    if s.duration_s > 0 and s.step_s > 0:
        steps = s.duration_s / s.step_s
        if abs(steps - round(steps)) > 1e-6:
            issues.append("duration_s must be an integer number of steps")
        elif s.log_decimation >= 1 and round(steps) % s.log_decimation != 0:
            issues.append("log_decimation must divide the step count evenly")
    if not s.robots:
        issues.append("scenario needs at least one robot")
        return issues
    n = s.robots[0].model.n_links
    if any(r.model.n_links != n for r in s.robots):
        issues.append("all robots must share one joint count")
    if s.regime not in REGIMES:
        issues.append(f"unknown regime {s.regime!r}")
        return issues
    if s.regime != "open_loop":
        if any(r.model.payload is None for r in s.robots):
            issues.append("adaptive regimes require a payload on every robot")
        if s.lambda_per_s <= 0.0:
            issues.append("lambda_per_s must be positive")
        if s.kd_nms_per_rad <= 0.0:
            issues.append("kd_nms_per_rad must be positive")
        pg = s.adaptation_gain
        if isinstance(pg, tuple):
            if len(pg) != 4 or any(v <= 0.0 for v in pg):
                issues.append("adaptation_gain vector must be 4 positive entries")
        elif pg <= 0.0:
            issues.append("adaptation_gain must be positive")
    if s.regime in ("consensus",) and s.k_gain < 0.0:
        issues.append("k_gain must be nonnegative")
    if s.regime in ("switching", "delayed") and s.k_gain <= 0.0:
        issues.append("k_gain must be positive for networked regimes")
    if s.regime == "switching":
        if s.schedule is None:
            issues.append("switching regime needs a schedule")
        else:
            if s.delay_s != 0.0:
                issues.append("switching topology cannot be combined with delays")
            if not s.schedule.dwell or s.schedule.dwell <= 0.0:
                issues.append("switching schedule needs a positive dwell time")
            for es in s.schedule.edge_sets:
                for i, j in es:
                    if not (0 <= i < s.n_robots and 0 <= j < s.n_robots):
                        issues.append(f"schedule edge ({i},{j}) out of range")
            reports = joint_connectivity_check(s.schedule, s.n_robots, s.duration_s)
            bad = [r for r in reports if not r["connected"]]
            if bad:
                issues.append(
                    f"{len(bad)}/{len(reports)} schedule windows have a disconnected union graph "
                    f"(first at t={bad[0]['t_start']:.3f})"
                )
    if s.regime == "delayed":
        if s.schedule is not None:
            issues.append("delayed regime cannot be combined with a switching schedule")
        if not s.edges:
            issues.append("delayed regime needs a static edge list")
        else:
            for i, j in s.edges:
                if not (0 <= i < s.n_robots and 0 <= j < s.n_robots) or i == j:
                    issues.append(f"edge ({i},{j}) invalid")
            if not _connected(s.n_robots, s.edges):
                issues.append("delayed topology must be connected")
        if s.delay_s < 0.0:
            issues.append("delay_s must be nonnegative")
        else:
            d = s.delay_s / s.step_s
            if abs(s.delay_s - round(d) * s.step_s) > 1e-9:
                issues.append("delay_s must be a multiple of step_s (within 1e-9 s)")
    if s.composite_kind not in COMPOSITE_KINDS:
        issues.append(f"unknown composite kind {s.composite_kind!r}")
    if s.composite_kind != "none":
        if not (0.0 < s.composite_gamma < 1.0):
            issues.append("composite gamma must be in (0, 1)")
        if s.robot_adaptation_gain is not None:
            issues.append("composite adaptation cannot be combined with arm-parameter adaptation")
        if s.regime in ("open_loop", "centralized"):
            issues.append("composite adaptation needs a per-robot estimate regime")
    if s.robot_adaptation_gain is not None and s.robot_adaptation_gain <= 0.0:
        issues.append("robot_adaptation_gain must be positive")
    # trajectories must resolve and sample over the horizon
    for k, r in enumerate(s.robots):
        try:
            traj = resolve_trajectory(r.trajectory, r.model)
            probe = np.linspace(0.0, max(s.duration_s, s.step_s), 2001)
            traj.sample(probe)
        except (TrajectoryError, ValueError) as exc:
            issues.append(f"robot {k}: {exc}")
        if r.q0_rad is not None and len(r.q0_rad) != n:
            issues.append(f"robot {k}: q0_rad has wrong length")
        if r.qd0_rad is not None and len(r.qd0_rad) != n:
            issues.append(f"robot {k}: qd0_rad has wrong length")
    return issues
