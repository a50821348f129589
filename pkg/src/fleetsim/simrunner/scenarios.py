"""Deterministic lockstep scenario engines.

Every engine drives real communicators over the message bus, one exchange
round per simulated tick: first a send sweep across all agents, then a
gather-and-step sweep. With a lockstep clock and seeded randomness the
whole run is a pure function of (config, seed), which is what makes trace
bytes reproducible.

The assignment engine layers three concerns per tick: cloud inbox
processing (task reveals and completions, which restart the optimization
epoch), one distributed-simplex protocol round while an epoch is active,
and task-directed driving. The cloud lives on its own star-topology bus,
so robots never see each other's completions except through cloud
broadcasts.
"""

from __future__ import annotations

import math
import os
import time

import numpy as np

from ..assignment import (
    CloudState,
    DistributedSimplexAgent,
    cloud_complete,
    costs_from_positions,
    default_margin,
)
from ..communicator import Communicator
from ..control import SiToUniParams, si_to_unicycle
from ..dynamics import IntegratorConfig, UnicycleInput, UnicycleState, step
from ..errors import NonConvergenceError, ScenarioError
from ..guidance import containment_velocity, formation_velocity, rendezvous_velocity
from ..lp import AssignmentProblem, hungarian
from ..mpc import (
    Box,
    LinearAgentModel,
    OcpSpec,
    Polyhedron,
    StageCost,
    centralized_bootstrap,
    mpc_round,
    plan_cost,
    shift_plan,
)
from ..netgraph import CommGraph, EdgeSchedule, graph_from_edges
from ..transport import MessageBus, TransportConfig
from .config import ScenarioConfig
from .trace import TraceWriter

__all__ = ["run_scenario"]


def _uniform_points(rng: np.random.Generator, box, count: int) -> np.ndarray:
    (x0, y0), (x1, y1) = box
    return rng.uniform([x0, y0], [x1, y1], size=(count, 2))


def _log_poses(writer: TraceWriter, t: float, positions) -> None:
    for i, pos in enumerate(positions):
        writer.write({"kind": "pose", "t": t, "agent": i, "pos": [float(v) for v in np.ravel(pos)]})


# -- consensus-style kinematic scenarios ----------------------------------------


def _run_containment(cfg: ScenarioConfig, writer: TraceWriter) -> dict:
    p = cfg.params
    n = cfg.n
    leaders = set(p["leaders"])
    followers = [i for i in range(n) if i not in leaders]
    rng = np.random.default_rng([cfg.seed, 11])

    lead_pts = p.get("leader_positions")
    if lead_pts is None:
        lead_pts = _uniform_points(rng, p["init_box"], len(leaders))
    foll_pts = p.get("follower_positions")
    if foll_pts is None:
        foll_pts = _uniform_points(rng, p["init_box"], len(followers))
    pos = np.zeros((n, 2))
    for idx, i in enumerate(sorted(leaders)):
        pos[i] = lead_pts[idx]
    for idx, i in enumerate(followers):
        pos[i] = foll_pts[idx]

    bus = MessageBus()
    schedule = EdgeSchedule(cfg.graph, activation_prob=p["activation"], rng_seed=cfg.seed)
    comms = [Communicator(bus, i, schedule, profile="time_varying") for i in range(n)]

    steps = int(round(cfg.duration / cfg.dt))
    gain = p["gain"]
    _log_poses(writer, 0.0, pos)
    for k in range(steps):
        for i in range(n):
            comms[i].exchange_send(pos[i], round=k)
        new_pos = pos.copy()
        for i in range(n):
            got = comms[i].exchange_collect(round=k)
            u = containment_velocity(pos[i], got, i in leaders, gain=gain)
            writer.write({"kind": "input", "t": k * cfg.dt, "agent": i, "u": list(map(float, u))})
            new_pos[i] = pos[i] + cfg.dt * u
        pos = new_pos
        bus.clock.advance(cfg.dt)
        _log_poses(writer, (k + 1) * cfg.dt, pos)
    return {"n": n, "leaders": sorted(leaders), "steps": steps}


def _formation_initials(p: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    """Initial layout: explicit positions win; hexagon runs otherwise start
    at the target slots plus seeded noise of half a side per axis, because
    the distance-gradient flow has attracting wrong-shape equilibria and a
    box-uniform scatter lands in their basins for many seeds. Explicit
    formations without positions fall back to the uniform box."""
    pts = p.get("positions")
    if pts is not None:
        return np.asarray(pts, dtype=float)
    raw = p["raw"]
    if raw.get("kind") == "hexagon":
        side = float(raw["side"])
        angles = np.arange(n) * (math.pi / 3.0)
        slots = side * np.column_stack([np.cos(angles), np.sin(angles)])
        return slots + rng.uniform(-0.5 * side, 0.5 * side, size=(n, 2))
    return _uniform_points(rng, p["init_box"], n)


def _run_formation(cfg: ScenarioConfig, writer: TraceWriter) -> dict:
    p = cfg.params
    n = cfg.n
    spec = p["spec"]
    rng = np.random.default_rng([cfg.seed, 12])
    pos = _formation_initials(p, n, rng)

    bus = MessageBus()
    comms = [Communicator(bus, i, cfg.graph, profile="static") for i in range(n)]
    steps = int(round(cfg.duration / cfg.dt))

    if p["model"] == "unicycle":
        thetas = rng.uniform(-math.pi, math.pi, size=n)
        states = [UnicycleState(pos[i][0], pos[i][1], thetas[i]) for i in range(n)]
        params = SiToUniParams(
            lookahead=p["lookahead"], v_max=p["v_max"], omega_max=p["omega_max"]
        )
        icfg = IntegratorConfig(dt=cfg.dt)
        _log_poses(writer, 0.0, [s.pos for s in states])
        for k in range(steps):
            for i in range(n):
                comms[i].exchange_send(np.asarray(states[i].pos), round=k)
            new_states = list(states)
            for i in range(n):
                got = comms[i].exchange_collect(round=k)
                u = formation_velocity(np.asarray(states[i].pos), got, spec, i)
                cmd = si_to_unicycle(u, states[i].theta, params)
                writer.write(
                    {"kind": "input", "t": k * cfg.dt, "agent": i,
                     "u": [float(cmd.v), float(cmd.omega)]}
                )
                new_states[i] = step(states[i], cmd, icfg)
            states = new_states
            bus.clock.advance(cfg.dt)
            _log_poses(writer, (k + 1) * cfg.dt, [s.pos for s in states])
        return {"n": n, "model": "unicycle", "steps": steps}

    _log_poses(writer, 0.0, pos)
    for k in range(steps):
        for i in range(n):
            comms[i].exchange_send(pos[i], round=k)
        new_pos = pos.copy()
        for i in range(n):
            got = comms[i].exchange_collect(round=k)
            u = formation_velocity(pos[i], got, spec, i)
            writer.write({"kind": "input", "t": k * cfg.dt, "agent": i, "u": list(map(float, u))})
            new_pos[i] = pos[i] + cfg.dt * u
        pos = new_pos
        bus.clock.advance(cfg.dt)
        _log_poses(writer, (k + 1) * cfg.dt, pos)
    return {"n": n, "model": "single_integrator", "steps": steps}


def _run_rendezvous(cfg: ScenarioConfig, writer: TraceWriter) -> dict:
    p = cfg.params
    n = cfg.n
    rng = np.random.default_rng([cfg.seed, 13])
    pos = _uniform_points(rng, p["init_box"], n)
    bus = MessageBus()
    comms = [Communicator(bus, i, cfg.graph, profile="static") for i in range(n)]
    steps = int(round(cfg.duration / cfg.dt))
    gain = p["gain"]
    _log_poses(writer, 0.0, pos)
    for k in range(steps):
        for i in range(n):
            comms[i].exchange_send(pos[i], round=k)
        new_pos = pos.copy()
        for i in range(n):
            got = comms[i].exchange_collect(round=k)
            u = gain * rendezvous_velocity(pos[i], got)
            writer.write({"kind": "input", "t": k * cfg.dt, "agent": i, "u": list(map(float, u))})
            new_pos[i] = pos[i] + cfg.dt * u
        pos = new_pos
        bus.clock.advance(cfg.dt)
        _log_poses(writer, (k + 1) * cfg.dt, pos)
    return {"n": n, "steps": steps}


# -- dynamic task assignment -----------------------------------------------------


class _AssignmentEpoch:
    """One distributed optimization over the current live task window."""

    def __init__(self, number: int, live_ids: list[int], costs: np.ndarray,
                 margin: int, budget: int):
        self.number = number
        self.live_ids = live_ids
        self.costs = costs
        self.budget = budget
        n = costs.shape[0]
        self.agents = [
            DistributedSimplexAgent(i, costs, n, margin=margin) for i in range(n)
        ]
        self.rounds = 0

    def finished(self) -> bool:
        return all(a.halted for a in self.agents)


def _run_assignment(cfg: ScenarioConfig, writer: TraceWriter) -> dict:
    p = cfg.params
    n = cfg.n
    rng = np.random.default_rng([cfg.seed, 14])
    pts = p.get("robot_positions")
    pos = np.asarray(pts, dtype=float) if pts is not None else _uniform_points(rng, p["init_box"], n)

    cloud = CloudState.from_positions(p["task_positions"], p["hidden_tasks"])
    total_tasks = len(cloud.revealed) + len(cloud.hidden)

    peer_bus = MessageBus()
    transport = TransportConfig(drop_prob=p["drop_prob"], rng_seed=cfg.seed)
    peer_comms = [
        Communicator(peer_bus, i, cfg.graph, profile=p["profile"], config=transport)
        for i in range(n)
    ]
    cloud_bus = MessageBus()
    star = graph_from_edges(n + 1, [[i, n] for i in range(n)])
    robot_cloud = [Communicator(cloud_bus, i, star, profile="static") for i in range(n)]
    cloud_comm = Communicator(cloud_bus, n, star, profile="static")

    margin = default_margin(cfg.graph, p["drop_prob"])
    budget = p["round_budget"]
    speed = p["speed"]
    arrive = p["arrive_radius"]

    # robots' shared view of the live window; seeded from the initial reveal
    live: dict[int, np.ndarray] = {}
    targets: list[int | None] = [None] * n
    epoch: _AssignmentEpoch | None = None
    epoch_count = 0
    pending_restart = True  # the initial reveal at t=0
    for task in cloud.revealed:
        writer.write({
            "kind": "task_event", "t": 0.0, "event": "reveal",
            "task": task.task_id, "pos": [float(v) for v in task.position],
        })
        live[task.task_id] = task.position.copy()

    steps = int(round(cfg.duration / cfg.dt))
    _log_poses(writer, 0.0, pos)
    completed = 0
    finished_at = None
    for k in range(steps):
        t = k * cfg.dt

        # phase A: cloud inbox (reveals and completions broadcast last tick)
        changed = pending_restart
        pending_restart = False
        for i in range(n):
            for _, msg in robot_cloud[i].drain(n):
                if msg["event"] == "reveal":
                    # every robot sees the same broadcast; first one in
                    # updates the shared window, the rest deduplicate
                    if msg["task"] not in live:
                        live[msg["task"]] = np.asarray(msg["pos"], dtype=float)
                        changed = True
                elif msg["event"] == "complete":
                    if msg["task"] in live:
                        del live[msg["task"]]
                        changed = True
                    if targets[i] == msg["task"]:
                        targets[i] = None

        # phase B: distributed optimization, one protocol round per tick
        if changed and live:
            live_ids = sorted(live)
            task_pts = [live[j] for j in live_ids]
            costs = np.zeros((n, n))
            costs[:, : len(task_pts)] = costs_from_positions(pos, task_pts)
            epoch = _AssignmentEpoch(epoch_count, live_ids, costs, margin, budget)
            epoch_count += 1
        if epoch is not None:
            for i in range(n):
                peer_comms[i].send(
                    epoch.agents[i].payload(), peer_comms[i].out_neighbors, round=k
                )
            for i in range(n):
                received = []
                for j in peer_comms[i].in_neighbors:
                    for _, payload in peer_comms[i].drain(j):
                        parsed, _ = epoch.agents[i].parse(payload)
                        received.extend(parsed)
                epoch.agents[i].absorb(received)
            epoch.rounds += 1
            if epoch.finished():
                results = [a.result() for a in epoch.agents]
                perms = {r[1] for r in results}
                if len(perms) != 1:
                    raise ScenarioError(
                        "assignment epoch %d ended without consensus" % epoch.number
                    )
                perm = results[0][1]
                objective = results[0][2]
                reference = hungarian(AssignmentProblem(n, epoch.costs))[1]
                writer.write({
                    "kind": "assignment", "t": t, "epoch": epoch.number,
                    "perm": list(perm), "objective": float(objective),
                    "reference": float(reference), "rounds": epoch.rounds,
                })
                for i in range(n):
                    task_idx = perm[i]
                    if task_idx < len(epoch.live_ids):
                        task_id = epoch.live_ids[task_idx]
                        if task_id in live:
                            targets[i] = task_id
                            writer.write({
                                "kind": "task_event", "t": t, "event": "assign",
                                "task": task_id, "agent": i,
                            })
                        else:
                            targets[i] = None
                    else:
                        targets[i] = None
                epoch = None
            elif epoch.rounds >= budget:
                raise NonConvergenceError(
                    "assignment epoch %d exceeded %d rounds" % (epoch.number, budget),
                    diagnostics={"epoch": epoch.number},
                )

        # phase C: task-directed driving
        arrivals: list[tuple[int, int]] = []
        for i in range(n):
            tgt = targets[i]
            if tgt is None or tgt not in live:
                writer.write({"kind": "input", "t": t, "agent": i, "u": [0.0, 0.0]})
                continue
            goal = live[tgt]
            delta = goal - pos[i]
            dist = float(np.linalg.norm(delta))
            if dist <= speed * cfg.dt:
                new = goal.copy()
            else:
                new = pos[i] + (speed * cfg.dt / dist) * delta
            u = (new - pos[i]) / cfg.dt
            writer.write({"kind": "input", "t": t, "agent": i, "u": list(map(float, u))})
            pos[i] = new
            if float(np.linalg.norm(goal - pos[i])) <= arrive:
                arrivals.append((i, tgt))
                targets[i] = None

        for i, task_id in arrivals:
            robot_cloud[i].send({"complete": task_id}, n, round=k)

        # phase D: cloud processes completions and reveals replacements
        t_done = (k + 1) * cfg.dt
        for i in range(n):
            for _, msg in cloud_comm.drain(i):
                task_id = int(msg["complete"])
                fresh = cloud_complete(cloud, task_id)
                completed += 1
                writer.write({
                    "kind": "task_event", "t": t_done, "event": "complete",
                    "task": task_id, "agent": i,
                })
                cloud_comm.send(
                    {"event": "complete", "task": task_id, "agent": i},
                    cloud_comm.out_neighbors, round=k,
                )
                if fresh is not None:
                    writer.write({
                        "kind": "task_event", "t": t_done, "event": "reveal",
                        "task": fresh.task_id,
                        "pos": [float(v) for v in fresh.position],
                    })
                    cloud_comm.send(
                        {"event": "reveal", "task": fresh.task_id,
                         "pos": [float(v) for v in fresh.position]},
                        cloud_comm.out_neighbors, round=k,
                    )

        peer_bus.clock.advance(cfg.dt)
        cloud_bus.clock.advance(cfg.dt)
        _log_poses(writer, t_done, pos)
        if completed == total_tasks and finished_at is None:
            finished_at = t_done
            break

    return {
        "n": n,
        "completed_tasks": completed,
        "total_tasks": total_tasks,
        "epochs": epoch_count,
        "finished_at": finished_at,
    }


# -- distributed MPC ---------------------------------------------------------------


def _build_ocp_specs(p: dict) -> list[OcpSpec]:
    coupling = None
    if "coupling" in p:
        coupling = Polyhedron(np.asarray(p["coupling"]["H"], dtype=float),
                              np.asarray(p["coupling"]["h"], dtype=float))
    specs = []
    for blk in p["agents"]:
        model = LinearAgentModel(
            np.asarray(blk["A"], dtype=float), np.asarray(blk["B"], dtype=float),
            np.asarray(blk["C"], dtype=float), np.asarray(blk["D"], dtype=float),
            np.asarray(blk["x0"], dtype=float),
        )
        x_set = None
        if "x_min" in blk or "x_max" in blk:
            lo = np.asarray(blk.get("x_min", [-math.inf] * model.n), dtype=float)
            hi = np.asarray(blk.get("x_max", [math.inf] * model.n), dtype=float)
            x_set = Box(lo, hi)
        u_set = None
        if "u_min" in blk or "u_max" in blk:
            lo = np.asarray(blk.get("u_min", [-math.inf] * model.m), dtype=float)
            hi = np.asarray(blk.get("u_max", [math.inf] * model.m), dtype=float)
            u_set = Box(lo, hi)
        specs.append(OcpSpec(
            model=model,
            horizon=p["horizon"],
            terminal_state=np.asarray(blk["terminal_state"], dtype=float),
            terminal_input=np.asarray(blk["terminal_input"], dtype=float),
            cost=StageCost(np.asarray(blk["w_x"], dtype=float),
                           np.asarray(blk["w_u"], dtype=float)),
            x_set=x_set,
            u_set=u_set,
            coupling=coupling,
        ))
    return specs


def _run_mpc(cfg: ScenarioConfig, writer: TraceWriter) -> dict:
    p = cfg.params
    n = cfg.n
    specs = _build_ocp_specs(p)
    plans = centralized_bootstrap(specs)
    coupling = specs[0].coupling

    # plans are broadcast every step over a complete graph; relaying
    # through multi-hop topologies is out of scope for this engine
    full = CommGraph(n, 1 - np.eye(n, dtype=np.int8)) if n > 1 else None
    bus = MessageBus()
    comms = (
        [Communicator(bus, i, full, profile="static") for i in range(n)]
        if full is not None
        else []
    )

    steps = p["steps"]
    closed_loop_cost = 0.0
    max_residual = 0.0
    for i in range(n):
        writer.write({
            "kind": "pose", "t": 0.0, "agent": i,
            "pos": [float(v) for v in plans[i].states[0]],
        })
    for k in range(steps):
        turn = k % n
        others = None
        if comms:
            for i in range(n):
                comms[i].send({"z": plans[i].outputs}, comms[i].out_neighbors, round=k)
            gathered = [comms[i].exchange_collect(round=k) for i in range(n)]
            others = sum(
                np.asarray(v["z"], dtype=float) for j, v in gathered[turn].items()
            ) if gathered[turn] else np.zeros_like(plans[turn].outputs)
        plans, replanned = mpc_round(specs, plans, turn, others_outputs=others)

        if coupling is not None:
            z_now = sum(pl.outputs[0] for pl in plans)
            residual = float(max(np.max(coupling.G @ z_now - coupling.g), 0.0))
        else:
            residual = 0.0
        max_residual = max(max_residual, residual)

        stage = 0.0
        for spec, pl in zip(specs, plans):
            stage += float(np.abs(pl.states[0] - spec.x_ref) @ spec.cost.w_x)
            stage += float(np.abs(pl.inputs[0] - spec.u_ref) @ spec.cost.w_u)
        closed_loop_cost += stage

        writer.write({
            "kind": "mpc_residual", "t": float(k), "residual": residual,
            "stage_cost": stage, "turn": turn, "replanned": bool(replanned),
            "costs": [plan_cost(pl, spec) for pl, spec in zip(plans, specs)],
        })
        for i in range(n):
            writer.write({
                "kind": "input", "t": float(k), "agent": i,
                "u": [float(v) for v in plans[i].inputs[0]],
            })
            writer.write({
                "kind": "pose", "t": float(k + 1), "agent": i,
                "pos": [float(v) for v in plans[i].states[1]],
            })
        plans = [shift_plan(pl, spec) for pl, spec in zip(plans, specs)]
        bus.clock.advance(cfg.dt)

    return {
        "n": n,
        "steps": steps,
        "max_coupling_residual": max_residual,
        "closed_loop_cost": closed_loop_cost,
    }


_ENGINES = {
    "containment": _run_containment,
    "formation": _run_formation,
    "rendezvous": _run_rendezvous,
    "assignment": _run_assignment,
    "mpc": _run_mpc,
}


def run_scenario(cfg: ScenarioConfig, out_path: str) -> dict:
    """Run a scenario, writing the trace to ``out_path``.

    ``out_path`` may be a directory (trace lands at ``<dir>/trace.jsonl``)
    or an explicit ``.jsonl`` file path. Returns the summary metrics; on
    failure the partial trace is flushed before the error propagates.
    """
    if out_path.endswith(".jsonl"):
        trace_path = out_path
    else:
        trace_path = os.path.join(out_path, "trace.jsonl")
    engine = _ENGINES[cfg.scenario]
    writer = TraceWriter(trace_path, cfg.raw)
    started = time.perf_counter()
    try:
        summary = engine(cfg, writer)
        # the trace stays byte-identical across reruns of the same config
        # and seed, so wall time and the output path ride only on the
        # returned dict, never on disk
        writer.write({"kind": "summary", **summary})
        summary["wall_seconds"] = time.perf_counter() - started
        summary["trace"] = trace_path
        return summary
    finally:
        writer.close()
