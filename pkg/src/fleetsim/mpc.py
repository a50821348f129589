"""Sequential distributed MPC with coupled output constraints.

Each agent i carries discrete-time linear dynamics
x(t+1) = A x(t) + B u(t) with output z(t) = C x(t) + D u(t); outputs share
a common dimension and their network-wide sum must stay in a polyhedral
set S = {z : Hz <= h} at every step. Agents replan one at a time in a
fixed round-robin order: the agent whose turn it is receives the summed
output plans of everyone else, solves its local T-step optimal control
problem as an LP (weighted 1-norm stage cost via an epigraph encoding,
terminal equality to a declared equilibrium), and accepts the new plan
only if its cost does not exceed the old one. Everyone else keeps their
plan, so joint feasibility survives the round; the terminal-equilibrium
shift then keeps it alive across the step. That is the standard recursive
feasibility construction for this family of schemes.

Cost references default to the terminal equilibrium pair; in that
configuration the appended shift step is free and each agent's planned
cost is non-increasing over time.

The closed loop is fully deterministic: the plant here is the model
itself, so applying the first planned input lands exactly on the plan's
second state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FeasibilityError, LpError, ModelError, PlanError
from .lp import INFEASIBLE, OPTIMAL, LpBuilder, solve_lp

__all__ = [
    "LinearAgentModel",
    "Box",
    "Polyhedron",
    "StageCost",
    "OcpSpec",
    "Plan",
    "build_local_ocp",
    "LocalOcp",
    "replan_local",
    "plan_cost",
    "validate_plan",
    "shift_plan",
    "coupling_residual",
    "mpc_round",
    "mpc_step",
    "StepResult",
    "centralized_bootstrap",
    "receding_horizon_oracle",
]

_DYN_TOL = 1e-9
_ACCEPT_TOL = 1e-9


@dataclass(frozen=True)
class LinearAgentModel:
    """Discrete-time LTI agent with output map and initial state."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        x0 = np.asarray(self.x0, dtype=float).ravel()
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError("A must be square, got %s" % (A.shape,))
        if B.shape[0] != n:
            raise ModelError("B rows %d do not match state dim %d" % (B.shape[0], n))
        if C.shape[1] != n:
            raise ModelError("C cols %d do not match state dim %d" % (C.shape[1], n))
        if D.shape != (C.shape[0], B.shape[1]):
            raise ModelError("D shape %s inconsistent with C/B" % (D.shape,))
        if x0.shape != (n,):
            raise ModelError("x0 shape %s does not match state dim %d" % (x0.shape, n))
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D), ("x0", x0)):
            if not np.all(np.isfinite(arr)):
                raise ModelError("%s contains NaN or inf" % name)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Box:
    """Componentwise bounds; use +-inf to leave a side open."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ModelError("box bounds differ in length")
        if np.any(lo > hi):
            raise ModelError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def rows(self, dim: int):
        """(G, g) pairs equivalent to the box, finite sides only."""
        if self.lower.shape != (dim,):
            raise ModelError("box dimension %s does not match %d" % (self.lower.shape, dim))
        G, g = [], []
        eye = np.eye(dim)
        for k in range(dim):
            if np.isfinite(self.upper[k]):
                G.append(eye[k])
                g.append(self.upper[k])
            if np.isfinite(self.lower[k]):
                G.append(-eye[k])
                g.append(-self.lower[k])
        return np.array(G).reshape(-1, dim), np.array(g)


@dataclass(frozen=True)
class Polyhedron:
    """{v : G v <= g}."""

    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        g = np.asarray(self.g, dtype=float).ravel()
        if G.shape[0] != g.shape[0]:
            raise ModelError("polyhedron row counts differ: %s vs %s" % (G.shape, g.shape))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    def rows(self, dim: int):
        if self.G.shape[1] != dim:
            raise ModelError("polyhedron dimension %d does not match %d" % (self.G.shape[1], dim))
        return self.G, self.g


@dataclass(frozen=True)
class StageCost:
    """Weighted 1-norm stage cost; references default to the terminal pair."""

    w_x: np.ndarray
    w_u: np.ndarray
    x_ref: np.ndarray | None = None
    u_ref: np.ndarray | None = None

    def __post_init__(self):
        w_x = np.asarray(self.w_x, dtype=float).ravel()
        w_u = np.asarray(self.w_u, dtype=float).ravel()
        if np.any(w_x < 0) or np.any(w_u < 0):
            raise ModelError("stage cost weights must be nonnegative")
        object.__setattr__(self, "w_x", w_x)
        object.__setattr__(self, "w_u", w_u)
        if self.x_ref is not None:
            object.__setattr__(self, "x_ref", np.asarray(self.x_ref, dtype=float).ravel())
        if self.u_ref is not None:
            object.__setattr__(self, "u_ref", np.asarray(self.u_ref, dtype=float).ravel())


@dataclass(frozen=True)
class OcpSpec:
    """One agent's local optimal control problem.

    The terminal pair must be an equilibrium (xbar = A xbar + B ubar);
    plans end with a hard equality x(T) = xbar so shifting stays feasible.
    ``coupling`` is the shared output set S, identical across agents.
    """

    model: LinearAgentModel
    horizon: int
    terminal_state: np.ndarray
    terminal_input: np.ndarray
    cost: StageCost
    x_set: Box | Polyhedron | None = None
    u_set: Box | Polyhedron | None = None
    coupling: Polyhedron | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ModelError("horizon must be at least 1")
        xbar = np.asarray(self.terminal_state, dtype=float).ravel()
        ubar = np.asarray(self.terminal_input, dtype=float).ravel()
        mdl = self.model
        if xbar.shape != (mdl.n,) or ubar.shape != (mdl.m,):
            raise ModelError("terminal pair dimensions do not match the model")
        resid = np.max(np.abs(mdl.A @ xbar + mdl.B @ ubar - xbar)) if mdl.n else 0.0
        if resid > _DYN_TOL:
            raise ModelError(
                "terminal pair is not an equilibrium (residual %.2e)" % resid
            )
        if self.cost.w_x.shape != (mdl.n,) or self.cost.w_u.shape != (mdl.m,):
            raise ModelError("stage cost weight dimensions do not match the model")
        object.__setattr__(self, "terminal_state", xbar)
        object.__setattr__(self, "terminal_input", ubar)

    @property
    def x_ref(self) -> np.ndarray:
        return self.cost.x_ref if self.cost.x_ref is not None else self.terminal_state

    @property
    def u_ref(self) -> np.ndarray:
        return self.cost.u_ref if self.cost.u_ref is not None else self.terminal_input

    @property
    def terminal_output(self) -> np.ndarray:
        return self.model.C @ self.terminal_state + self.model.D @ self.terminal_input


@dataclass(frozen=True)
class Plan:
    """An open-loop trajectory: states (T+1, n), inputs (T, m), outputs (T, r)."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if states.shape[0] != inputs.shape[0] + 1:
            raise PlanError(
                "plan has %d states for %d inputs" % (states.shape[0], inputs.shape[0])
            )
        if outputs.shape[0] != inputs.shape[0]:
            raise PlanError("plan outputs must cover t = 0..T-1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_states_inputs(cls, model: LinearAgentModel, states, inputs) -> "Plan":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        outputs = states[:-1] @ model.C.T + inputs @ model.D.T
        return cls(states, inputs, outputs)


def validate_plan(plan: Plan, spec: OcpSpec, tol: float = _DYN_TOL) -> None:
    """Raise PlanError unless the plan follows the model dynamics and ends
    at the terminal state."""
    mdl = spec.model
    if plan.horizon != spec.horizon:
        raise PlanError("plan horizon %d does not match spec %d" % (plan.horizon, spec.horizon))
    pred = plan.states[:-1] @ mdl.A.T + plan.inputs @ mdl.B.T
    worst = float(np.max(np.abs(pred - plan.states[1:]))) if plan.horizon else 0.0
    if worst > tol:
        raise PlanError("plan violates dynamics by %.2e" % worst)
    zerr = float(np.max(np.abs(plan.states[:-1] @ mdl.C.T + plan.inputs @ mdl.D.T - plan.outputs)))
    if zerr > tol:
        raise PlanError("plan outputs inconsistent by %.2e" % zerr)
    term = float(np.max(np.abs(plan.states[-1] - spec.terminal_state)))
    if term > 1e-6:
        raise PlanError("plan does not end at the terminal state (off by %.2e)" % term)


def plan_cost(plan: Plan, spec: OcpSpec) -> float:
    """Weighted 1-norm cost, the same expression the LP minimizes."""
    dx = np.abs(plan.states[:-1] - spec.x_ref)
    du = np.abs(plan.inputs - spec.u_ref)
    return float((dx * spec.cost.w_x).sum() + (du * spec.cost.w_u).sum())


class LocalOcp:
    """A built local problem: the standard-form LP plus plan extraction."""

    def __init__(self, spec: OcpSpec, lp, extract, var_x, var_u):
        self.spec = spec
        self.lp = lp
        self._extract = extract
        self._var_x = var_x
        self._var_u = var_u

    def extract_plan(self, x_solution: np.ndarray) -> Plan:
        T, n, m = self.spec.horizon, self.spec.model.n, self.spec.model.m
        xs = self._extract.value(x_solution, self._var_x).reshape(T + 1, n)
        us = self._extract.value(x_solution, self._var_u).reshape(T, m)
        return Plan.from_states_inputs(self.spec.model, xs, us)


def build_local_ocp(spec: OcpSpec, x_now=None, others_sum=None) -> LocalOcp:
    """Encode one agent's T-step OCP as a standard-form LP.

    ``x_now`` defaults to the model's x0. ``others_sum`` is the (T, r)
    summed output plan of the other agents; coupling rows become
    H z_i(t) <= h - H others_sum(t). Passing None with a coupling set
    declared means the other agents are at zero output.
    """
    mdl = spec.model
    T, n, m, r = spec.horizon, mdl.n, mdl.m, mdl.r
    x_now = mdl.x0 if x_now is None else np.asarray(x_now, dtype=float).ravel()
    if x_now.shape != (n,):
        raise ModelError("x_now shape %s does not match state dim %d" % (x_now.shape, n))
    if others_sum is None:
        others = np.zeros((T, r))
    else:
        others = np.atleast_2d(np.asarray(others_sum, dtype=float))
        if others.shape != (T, r):
            raise ModelError("others_sum shape %s, expected (%d, %d)" % (others.shape, T, r))

    bld = LpBuilder()
    vx = bld.add_var((T + 1) * n, free=True)
    vu = bld.add_var(T * m, free=True)
    vsx = bld.add_var(T * n, free=False)
    vsu = bld.add_var(T * m, free=False)

    # initial and terminal equalities
    for k in range(n):
        row = np.zeros((T + 1) * n)
        row[k] = 1.0
        bld.add_eq({vx: row}, float(x_now[k]))
        row = np.zeros((T + 1) * n)
        row[T * n + k] = 1.0
        bld.add_eq({vx: row}, float(spec.terminal_state[k]))

    # dynamics x(t+1) = A x(t) + B u(t)
    for t in range(T):
        for k in range(n):
            rx = np.zeros((T + 1) * n)
            rx[(t + 1) * n + k] = 1.0
            rx[t * n : (t + 1) * n] -= mdl.A[k]
            ru = np.zeros(T * m)
            ru[t * m : (t + 1) * m] = -mdl.B[k]
            bld.add_eq({vx: rx, vu: ru}, 0.0)

    # epigraph rows: +-(v - ref) <= s
    for t in range(T):
        for k in range(n):
            for sign in (1.0, -1.0):
                rx = np.zeros((T + 1) * n)
                rx[t * n + k] = sign
                rs = np.zeros(T * n)
                rs[t * n + k] = -1.0
                bld.add_le({vx: rx, vsx: rs}, sign * float(spec.x_ref[k]))
        for k in range(m):
            for sign in (1.0, -1.0):
                ru = np.zeros(T * m)
                ru[t * m + k] = sign
                rs = np.zeros(T * m)
                rs[t * m + k] = -1.0
                bld.add_le({vu: ru, vsu: rs}, sign * float(spec.u_ref[k]))

    # state and input sets
    if spec.x_set is not None:
        G, g = spec.x_set.rows(n)
        for t in range(1, T + 1):
            for row, rhs in zip(G, g):
                rx = np.zeros((T + 1) * n)
                rx[t * n : (t + 1) * n] = row
                bld.add_le({vx: rx}, float(rhs))
    if spec.u_set is not None:
        G, g = spec.u_set.rows(m)
        for t in range(T):
            for row, rhs in zip(G, g):
                ru = np.zeros(T * m)
                ru[t * m : (t + 1) * m] = row
                bld.add_le({vu: ru}, float(rhs))

    # coupled output rows: H (C x(t) + D u(t)) <= h - H others(t)
    if spec.coupling is not None:
        H, h = spec.coupling.rows(r)
        for t in range(T):
            hz = H @ others[t]
            for row, rhs, shift in zip(H, h, hz):
                rx = np.zeros((T + 1) * n)
                rx[t * n : (t + 1) * n] = row @ mdl.C
                ru = np.zeros(T * m)
                ru[t * m : (t + 1) * m] = row @ mdl.D
                bld.add_le({vx: rx, vu: ru}, float(rhs - shift))

    bld.add_cost(vsx, np.tile(spec.cost.w_x, T))
    bld.add_cost(vsu, np.tile(spec.cost.w_u, T))
    lp, extract = bld.build()
    return LocalOcp(spec, lp, extract, vx, vu)


def replan_local(spec: OcpSpec, x_now, others_sum=None):
    """Solve the local OCP. Returns (plan, cost) or (None, None) if infeasible."""
    ocp = build_local_ocp(spec, x_now=x_now, others_sum=others_sum)
    sol = solve_lp(ocp.lp)
    if sol.status == INFEASIBLE:
        return None, None
    if sol.status != OPTIMAL:
        raise LpError("local OCP solve ended %s" % sol.status)
    plan = ocp.extract_plan(sol.x)
    return plan, plan_cost(plan, spec)


def shift_plan(plan: Plan, spec: OcpSpec) -> Plan:
    """Advance one step: drop stage 0, append the terminal equilibrium.

    The input plan is validated first; a dynamically inconsistent plan
    raises PlanError rather than silently producing garbage.
    """
    validate_plan(plan, spec)
    mdl = spec.model
    states = np.vstack([plan.states[1:], spec.terminal_state])
    inputs = np.vstack([plan.inputs[1:], spec.terminal_input])
    outputs = np.vstack([plan.outputs[1:], spec.terminal_output])
    new = Plan(states, inputs, outputs)
    # the appended step must itself follow the dynamics
    tail = mdl.A @ states[-2] + mdl.B @ inputs[-1]
    if float(np.max(np.abs(tail - states[-1]))) > _DYN_TOL:
        raise PlanError("shifted plan violates dynamics at the appended step")
    return new


def coupling_residual(plans: list[Plan], coupling: Polyhedron | None) -> float:
    """Worst violation of H sum_i z_i(t) <= h over the common horizon (>= 0)."""
    if coupling is None:
        return 0.0
    total = plans[0].outputs.copy()
    for p in plans[1:]:
        total = total + p.outputs
    slack = total @ coupling.G.T - coupling.g
    return float(max(np.max(slack), 0.0))


def joint_feasible(specs, plans, tol: float = 1e-8) -> bool:
    if coupling_residual(plans, specs[0].coupling) > tol:
        return False
    for spec, plan in zip(specs, plans):
        try:
            validate_plan(plan, spec)
        except PlanError:
            return False
    return True


def mpc_round(specs: list[OcpSpec], plans: list[Plan], turn: int,
              others_outputs=None) -> tuple[list[Plan], bool]:
    """One negotiation round: the turn agent replans, everyone else holds.

    ``others_outputs`` optionally injects the communicated (T, r) output
    sum; by default it is assembled from the plan list. Returns the new
    plan list and whether the turn agent adopted a new plan. An infeasible
    local solve keeps the old plan with a warning; if the old plan is
    itself broken there is nothing to fall back to and FeasibilityError
    is raised.
    """
    if not 0 <= turn < len(specs):
        raise ModelError("turn %d out of range" % turn)
    spec = specs[turn]
    old = plans[turn]
    if others_outputs is None and spec.coupling is not None:
        # only meaningful under a coupling, where all agents share the
        # output dimension; decoupled agents may have differing shapes
        others_outputs = sum(
            (p.outputs for j, p in enumerate(plans) if j != turn),
            np.zeros_like(old.outputs),
        )
    try:
        validate_plan(old, spec)
        old_cost = plan_cost(old, spec)
    except PlanError as exc:
        raise FeasibilityError("agent %d has no valid fallback plan" % turn) from exc

    new_plan, new_cost = replan_local(spec, old.states[0], others_outputs)
    if new_plan is None:
        warnings.warn(
            "agent %d local solve infeasible; keeping previous plan" % turn,
            RuntimeWarning,
            stacklevel=2,
        )
        return list(plans), False
    if new_cost <= old_cost + _ACCEPT_TOL:
        out = list(plans)
        out[turn] = new_plan
        return out, True
    return list(plans), False


@dataclass
class StepResult:
    plans: list[Plan]
    inputs: list[np.ndarray]
    states: list[np.ndarray]
    applied_residual: float
    costs: list[float]
    replanned: bool
    turn: int


def mpc_step(specs: list[OcpSpec], plans: list[Plan], t: int) -> StepResult:
    """One closed-loop step: round-robin replan, apply, shift.

    The turn at time t is t mod N. Applied states come straight off the
    plans (the plant is the model), and the returned plans are shifted so
    they start at t+1. ``applied_residual`` is the coupling violation at
    the applied step.
    """
    n_agents = len(specs)
    turn = t % n_agents
    plans, replanned = mpc_round(specs, plans, turn)
    coupling = specs[0].coupling
    if coupling is not None:
        z_now = sum(p.outputs[0] for p in plans)
        slack = coupling.G @ z_now - coupling.g
        applied_residual = float(max(np.max(slack), 0.0))
    else:
        applied_residual = 0.0
    inputs = [p.inputs[0].copy() for p in plans]
    states = [p.states[1].copy() for p in plans]
    costs = [plan_cost(p, s) for p, s in zip(plans, specs)]
    shifted = [shift_plan(p, s) for p, s in zip(plans, specs)]
    return StepResult(
        plans=shifted,
        inputs=inputs,
        states=states,
        applied_residual=applied_residual,
        costs=costs,
        replanned=replanned,
        turn=turn,
    )


def centralized_bootstrap(specs: list[OcpSpec], x_now=None) -> list[Plan]:
    """Jointly feasible (and jointly optimal) initial plans, solved in one
    stacked LP. Test and startup scaffolding: the closed loop itself stays
    distributed, this only seeds it with a feasible joint plan at t = 0.
    """
    T = specs[0].horizon
    r = specs[0].model.r
    coupled = any(s.coupling is not None for s in specs)
    for s in specs:
        if s.horizon != T:
            raise ModelError("bootstrap requires a shared horizon")
        if coupled and s.model.r != r:
            raise ModelError("coupled agents must share the output dimension")
    states0 = [s.model.x0 for s in specs] if x_now is None else x_now

    bld = LpBuilder()
    vxs, vus, vsxs, vsus = [], [], [], []
    for s in specs:
        vxs.append(bld.add_var((T + 1) * s.model.n, free=True))
        vus.append(bld.add_var(T * s.model.m, free=True))
        vsxs.append(bld.add_var(T * s.model.n, free=False))
        vsus.append(bld.add_var(T * s.model.m, free=False))

    for idx, s in enumerate(specs):
        mdl, n, m = s.model, s.model.n, s.model.m
        x_init = np.asarray(states0[idx], dtype=float).ravel()
        for k in range(n):
            row = np.zeros((T + 1) * n)
            row[k] = 1.0
            bld.add_eq({vxs[idx]: row}, float(x_init[k]))
            row = np.zeros((T + 1) * n)
            row[T * n + k] = 1.0
            bld.add_eq({vxs[idx]: row}, float(s.terminal_state[k]))
        for t in range(T):
            for k in range(n):
                rx = np.zeros((T + 1) * n)
                rx[(t + 1) * n + k] = 1.0
                rx[t * n : (t + 1) * n] -= mdl.A[k]
                ru = np.zeros(T * m)
                ru[t * m : (t + 1) * m] = -mdl.B[k]
                bld.add_eq({vxs[idx]: rx, vus[idx]: ru}, 0.0)
            for k in range(n):
                for sign in (1.0, -1.0):
                    rx = np.zeros((T + 1) * n)
                    rx[t * n + k] = sign
                    rs = np.zeros(T * n)
                    rs[t * n + k] = -1.0
                    bld.add_le({vxs[idx]: rx, vsxs[idx]: rs}, sign * float(s.x_ref[k]))
            for k in range(m):
                for sign in (1.0, -1.0):
                    ru = np.zeros(T * m)
                    ru[t * m + k] = sign
                    rs = np.zeros(T * m)
                    rs[t * m + k] = -1.0
                    bld.add_le({vus[idx]: ru, vsus[idx]: rs}, sign * float(s.u_ref[k]))
        if s.x_set is not None:
            G, g = s.x_set.rows(n)
            for t in range(1, T + 1):
                for row, rhs in zip(G, g):
                    rx = np.zeros((T + 1) * n)
                    rx[t * n : (t + 1) * n] = row
                    bld.add_le({vxs[idx]: rx}, float(rhs))
        if s.u_set is not None:
            G, g = s.u_set.rows(m)
            for t in range(T):
                for row, rhs in zip(G, g):
                    ru = np.zeros(T * m)
                    ru[t * m : (t + 1) * m] = row
                    bld.add_le({vus[idx]: ru}, float(rhs))
        bld.add_cost(vsxs[idx], np.tile(s.cost.w_x, T))
        bld.add_cost(vsus[idx], np.tile(s.cost.w_u, T))

    coupling = specs[0].coupling
    if coupling is not None:
        H, h = coupling.rows(r)
        for t in range(T):
            for row, rhs in zip(H, h):
                coeffs = {}
                for idx, s in enumerate(specs):
                    n, m = s.model.n, s.model.m
                    rx = np.zeros((T + 1) * n)
                    rx[t * n : (t + 1) * n] = row @ s.model.C
                    ru = np.zeros(T * m)
                    ru[t * m : (t + 1) * m] = row @ s.model.D
                    coeffs[vxs[idx]] = rx
                    coeffs[vus[idx]] = ru
                bld.add_le(coeffs, float(rhs))

    lp, extract = bld.build()
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise FeasibilityError("no jointly feasible initial plan exists (%s)" % sol.status)
    plans = []
    for idx, s in enumerate(specs):
        n, m = s.model.n, s.model.m
        xs = extract.value(sol.x, vxs[idx]).reshape(T + 1, n)
        us = extract.value(sol.x, vus[idx]).reshape(T, m)
        plans.append(Plan.from_states_inputs(s.model, xs, us))
    return plans


def receding_horizon_oracle(spec: OcpSpec, steps: int,
                            replan_at=None) -> tuple[np.ndarray, np.ndarray]:
    """Single-agent receding-horizon reference loop, solved centrally.

    ``replan_at`` is a predicate on the step index saying when to re-solve
    (default: every step); other steps shift the previous plan. Returns
    (states, inputs) over the closed loop, states shaped (steps+1, n).
    """
    should = (lambda t: True) if replan_at is None else replan_at
    x = spec.model.x0.copy()
    plan = None
    states = [x.copy()]
    inputs = []
    for t in range(steps):
        if plan is None or should(t):
            fresh, _ = replan_local(spec, x)
            if fresh is None:
                raise FeasibilityError("oracle problem infeasible at step %d" % t)
            plan = fresh
        inputs.append(plan.inputs[0].copy())
        x = plan.states[1].copy()
        states.append(x.copy())
        plan = shift_plan(plan, spec)
    return np.array(states), np.array(inputs)
