"""Per-robot agent harness: guidance, control, dynamics and background jobs.

An :class:`Agent` bundles the layers one robot runs. Pose flows guidance ->
control -> dynamics and back: each cycle the agent publishes its pose to
its out-neighbors, samples neighbor poses from the bus, evaluates its
guidance law into a velocity command, maps that through the control layer
(identity for single integrators, the lookahead-point mapping for
unicycles), and integrates one step.

Layers talk to each other only through values, and agents talk to each
other only through the message bus; an agent object holds no reference to
any other agent, so cross-agent state access is impossible by
construction.

Two driving modes:

* lockstep, for deterministic simulation and tests: the caller runs the
  ``tick_publish(r)`` / ``tick_compute(r)`` halves across all agents with
  an explicit round index;
* free-running, via :meth:`Agent.start`: a thread loops at the configured
  period, sampling the newest neighbor poses asynchronously (rounds are
  not aligned across free-running agents, so pose exchange degrades to
  state sampling there).

Long computations go through the optimization-job contract: at most one
job runs per agent, a job sees a stop event for cooperative cancellation,
and completion hooks registered with :meth:`Agent.on_done` fire exactly
once per finished job. Cancelled jobs never fire hooks. A job whose
callable raises is recorded as cancelled with the error attached (the
status vocabulary stays idle/running/done/cancelled).
"""

from __future__ import annotations

import itertools
import statistics
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import SiToUniParams, si_to_unicycle
from .dynamics import (
    DoubleIntegratorState,
    IntegratorConfig,
    SingleIntegratorState,
    UnicycleState,
    VelocityInput,
    step,
)
from .errors import BusyError, JobError, RegistrationError, StaleJobError
from .transport import MessageBus, TransportConfig

__all__ = [
    "AgentSpec",
    "Agent",
    "OptimizationJob",
    "spawn_agent",
    "JOB_IDLE",
    "JOB_RUNNING",
    "JOB_DONE",
    "JOB_CANCELLED",
]

JOB_IDLE = "idle"
JOB_RUNNING = "running"
JOB_DONE = "done"
JOB_CANCELLED = "cancelled"

ROLES = ("leader", "follower", "generic")
MODELS = ("single_integrator", "unicycle", "double_integrator")


@dataclass(frozen=True)
class AgentSpec:
    """Static description of one robot.

    ``law`` is a guidance callable (own_position, {neighbor: position})
    -> velocity vector; every law in :mod:`fleetsim.guidance` fits. The
    unicycle model additionally needs ``si_params`` so the velocity
    command can be mapped to (v, omega).
    """

    agent_id: int
    initial_state: object
    law: Callable[[np.ndarray, dict], np.ndarray]
    model: str = "single_integrator"
    role: str = "generic"
    period: float = 0.01
    si_params: SiToUniParams | None = None
    saturation: object = None


class OptimizationJob:
    """Handle for one background computation owned by an agent."""

    def __init__(self, job_id: int, problem: Callable):
        self.job_id = job_id
        self.problem = problem
        self.status = JOB_RUNNING
        self.result = None
        self.error: BaseException | None = None
        self.stop_event = threading.Event()
        self.thread: threading.Thread | None = None

    def join(self, timeout: float | None = None) -> None:
        if self.thread is not None:
            self.thread.join(timeout)


def _validate_spec(spec: AgentSpec) -> None:
    if spec.role not in ROLES:
        raise RegistrationError("unknown role %r" % (spec.role,))
    if spec.model not in MODELS:
        raise RegistrationError("unknown model %r" % (spec.model,))
    if spec.period <= 0:
        raise RegistrationError("period must be positive")
    if spec.model == "double_integrator":
        raise RegistrationError(
            "velocity-command guidance cannot drive a double integrator; "
            "no acceleration-level law is available"
        )
    if spec.model == "unicycle":
        if not isinstance(spec.initial_state, UnicycleState):
            raise RegistrationError("unicycle model needs a UnicycleState initial state")
        if spec.si_params is None:
            raise RegistrationError(
                "unicycle model needs si_params to map velocity commands"
            )
    if spec.model == "single_integrator":
        if not isinstance(spec.initial_state, SingleIntegratorState):
            raise RegistrationError(
                "single_integrator model needs a SingleIntegratorState initial state"
            )
        if spec.si_params is not None:
            raise RegistrationError("si_params only applies to the unicycle model")
    if isinstance(spec.initial_state, DoubleIntegratorState):
        raise RegistrationError("no guidance law drives a double integrator here")


class Agent:
    """A running robot: guidance loop plus the optimization-job slot."""

    def __init__(self, spec: AgentSpec, comm):
        _validate_spec(spec)
        self.spec = spec
        self.comm = comm
        self.state = spec.initial_state
        self.last_neighbors: dict[int, np.ndarray] = {}
        self.last_command: np.ndarray | None = None
        self._cfg = IntegratorConfig(dt=spec.period, saturation=spec.saturation)
        self._round = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._loop_starts: deque[float] = deque(maxlen=256)
        self._job_lock = threading.Lock()
        self._jobs: dict[int, OptimizationJob] = {}
        self._current: OptimizationJob | None = None
        self._hooks: list[Callable] = []
        self._job_ids = itertools.count()

    # -- pose and stepping ---------------------------------------------------

    @property
    def agent_id(self) -> int:
        return self.spec.agent_id

    @property
    def pose(self) -> np.ndarray:
        return np.asarray(self.state.pos, dtype=float)

    @property
    def round(self) -> int:
        return self._round

    def tick_publish(self, round: int | None = None) -> None:
        """Send the current pose to all out-neighbors."""
        r = self._round if round is None else int(round)
        self.comm.exchange_send(self.pose, round=r)

    def tick_compute(self, round: int | None = None, timeout: float | None = None) -> None:
        """Gather neighbor poses, run guidance and control, step dynamics.

        In lockstep use the communicator profile decides the gather:
        reliable profiles wait for every active in-neighbor's message for
        the round, best-effort takes whatever is in the mailbox.
        """
        r = self._round if round is None else int(round)
        raw = self.comm.exchange_collect(round=r, timeout=timeout)
        self._apply(raw)
        self._round = r + 1

    def tick(self, round: int | None = None, timeout: float | None = None) -> None:
        r = self._round if round is None else int(round)
        self.tick_publish(r)
        self.tick_compute(r, timeout=timeout)

    def _sample_neighbors(self) -> dict[int, object]:
        got = {}
        for j in self.comm.in_neighbors:
            v = self.comm.asynchronous_receive(j)
            if v is not None:
                got[j] = v
        return got

    def _apply(self, raw: dict[int, object]) -> None:
        neighbors = {j: np.asarray(v, dtype=float) for j, v in raw.items()}
        self.last_neighbors = neighbors
        u = np.asarray(self.spec.law(self.pose, neighbors), dtype=float)
        self.last_command = u
        if self.spec.model == "unicycle":
            inp = si_to_unicycle(u, self.state.theta, self.spec.si_params)
        else:
            inp = VelocityInput(u)
        self.state = step(self.state, inp, self._cfg)

    # -- free-running mode -----------------------------------------------------

    def start(self) -> "Agent":
        """Run the guidance loop in a thread at ``spec.period`` seconds."""
        if self._thread is not None and self._thread.is_alive():
            raise RegistrationError("agent %d is already running" % self.agent_id)
        self._stop.clear()
        self._thread = threading.Thread(
            target=self._run_loop, name="agent-%d" % self.agent_id, daemon=True
        )
        self._thread.start()
        return self

    def stop(self, timeout: float | None = 5.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def _run_loop(self) -> None:
        while not self._stop.is_set():
            start = time.monotonic()
            self._loop_starts.append(start)
            self.tick_publish()
            self._apply(self._sample_neighbors())
            self._round += 1
            elapsed = time.monotonic() - start
            self._stop.wait(max(0.0, self.spec.period - elapsed))

    def measured_period(self) -> float:
        """Median spacing between recent loop iterations (free-running mode)."""
        starts = list(self._loop_starts)
        if len(starts) < 2:
            return float("nan")
        return statistics.median(b - a for a, b in zip(starts, starts[1:]))

    # -- optimization jobs -------------------------------------------------------

    def submit_job(self, problem: Callable) -> int:
        """Run ``problem(stop_event)`` concurrently; returns the job id.

        Raises BusyError while another job is running. The job's result is
        delivered to every hook registered via :meth:`on_done`, exactly
        once, unless the job is cancelled first.
        """
        with self._job_lock:
            if self._current is not None and self._current.status == JOB_RUNNING:
                raise BusyError(
                    "agent %d already has job %d running"
                    % (self.agent_id, self._current.job_id)
                )
            job = OptimizationJob(next(self._job_ids), problem)
            self._jobs[job.job_id] = job
            self._current = job
            job.thread = threading.Thread(
                target=self._run_job,
                args=(job,),
                name="agent-%d-job-%d" % (self.agent_id, job.job_id),
                daemon=True,
            )
            job.thread.start()
            return job.job_id

    def _run_job(self, job: OptimizationJob) -> None:
        try:
            result = job.problem(job.stop_event)
        except BaseException as exc:  # noqa: BLE001 - recorded on the job handle
            with self._job_lock:
                job.status = JOB_CANCELLED
                job.error = exc
            return
        with self._job_lock:
            if job.stop_event.is_set() or job.status == JOB_CANCELLED:
                job.status = JOB_CANCELLED
                return
            job.status = JOB_DONE
            job.result = result
            hooks = list(self._hooks)
        for hook in hooks:
            hook(job.job_id, result)

    def cancel_job(self, job_id: int) -> None:
        """Cooperatively cancel a running job.

        The job's stop event is set and its status flips to cancelled
        immediately; the worker notices at its next check. Cancelling a
        job that already finished (or never existed) raises StaleJobError.
        """
        with self._job_lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise StaleJobError("agent %d has no job %d" % (self.agent_id, job_id))
            if job.status != JOB_RUNNING:
                raise StaleJobError(
                    "job %d already finished with status %r" % (job_id, job.status)
                )
            job.stop_event.set()
            job.status = JOB_CANCELLED

    def on_done(self, hook: Callable) -> None:
        """Register ``hook(job_id, result)`` for every future completion."""
        with self._job_lock:
            self._hooks.append(hook)

    def job_status(self, job_id: int) -> str:
        with self._job_lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise JobError("agent %d has no job %d" % (self.agent_id, job_id))
            return job.status

    def job_result(self, job_id: int):
        with self._job_lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise JobError("agent %d has no job %d" % (self.agent_id, job_id))
            if job.status != JOB_DONE:
                raise JobError("job %d is %s, not done" % (job_id, job.status))
            return job.result

    def job_handle(self, job_id: int) -> OptimizationJob:
        with self._job_lock:
            return self._jobs[job_id]


def spawn_agent(spec: AgentSpec, bus: MessageBus, graph, profile: str = "static",
                config: TransportConfig | None = None, start: bool = True) -> Agent:
    """Create, register and (by default) start an agent.

    A duplicate id, an unknown role/model, or a guidance/model mismatch
    raises RegistrationError before anything runs.
    """
    from .communicator import Communicator

    _validate_spec(spec)
    comm = Communicator(bus, spec.agent_id, graph, profile=profile, config=config)
    agent = Agent(spec, comm)
    if start:
        agent.start()
    return agent
