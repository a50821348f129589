"""In-process message bus: per-link FIFO queues with drop and latency.

The bus is the only channel between agents. It is thread-safe; blocking
receives suspend only the calling agent. Scenario engines usually drive it
single-threaded in lockstep (send sweep, then receive sweep), where the
blocking paths are never exercised.

Envelope header wire format, prepended to the payload bytes:

    sender:u32  round:u64  sent_at:f64   (little-endian, 20 bytes)

Delivery discipline per link is strict FIFO: a message becomes visible only
once it is at the queue head and its delivery time has passed, so randomized
latency cannot reorder a link. Queues are unbounded by default; a receiver
registered with ``queue_depth=k`` keeps only the newest k messages per link
(oldest dropped on overflow), which is how best-effort mailboxes get their
depth-1 "latest wins" behavior.
"""

from __future__ import annotations

import struct
import threading
import time
from collections import deque
from dataclasses import dataclass

from .errors import DecodeError, RegistrationError

__all__ = ["Envelope", "TransportConfig", "LockstepClock", "WallClock", "MessageBus"]

_HEADER = struct.Struct("<IQd")


@dataclass(frozen=True)
class Envelope:
    """One message on the wire."""

    sender: int
    round: int
    payload: bytes
    sent_at: float = 0.0

    def pack(self) -> bytes:
        return _HEADER.pack(self.sender, self.round, self.sent_at) + self.payload

    @classmethod
    def unpack(cls, data: bytes) -> "Envelope":
        if len(data) < _HEADER.size:
            raise DecodeError("envelope shorter than its header")
        sender, rnd, sent_at = _HEADER.unpack_from(data, 0)
        return cls(sender, rnd, bytes(data[_HEADER.size :]), sent_at)


@dataclass(frozen=True)
class TransportConfig:
    """Link quality knobs applied on the sending side.

    ``latency`` is seconds, either a float or a (lo, hi) pair sampled
    uniformly per message. Drops and latency draws come from a generator
    seeded with ``rng_seed`` and the sender id, so a run is reproducible
    whenever sends happen in a deterministic order.
    """

    drop_prob: float = 0.0
    latency: float | tuple[float, float] = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob %r outside [0, 1]" % (self.drop_prob,))
        lat = self.latency
        lo, hi = (lat, lat) if not isinstance(lat, tuple) else lat
        if lo < 0 or hi < lo:
            raise ValueError("bad latency spec %r" % (lat,))


class LockstepClock:
    """Simulated clock advanced explicitly by the scenario runner."""

    def __init__(self):
        self._t = 0.0
        self._listeners = []

    def now(self) -> float:
        return self._t

    def advance(self, dt: float) -> None:
        self._t += dt
        for notify in self._listeners:
            notify()

    def _subscribe(self, notify) -> None:
        self._listeners.append(notify)


class WallClock:
    """Real time, for free-running agents."""

    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0

    def _subscribe(self, notify) -> None:
        pass


class _Link:
    __slots__ = ("queue", "depth")

    def __init__(self, depth):
        self.queue = deque()
        self.depth = depth


class MessageBus:
    """Registry of agents plus one FIFO queue per (src, dst) link."""

    def __init__(self, clock=None):
        self.clock = clock if clock is not None else LockstepClock()
        self._lock = threading.Lock()
        self._conds: dict[int, threading.Condition] = {}
        self._links: dict[tuple[int, int], _Link] = {}
        self._depths: dict[int, int | None] = {}
        self.clock._subscribe(self._wake_all)

    def register(self, agent_id: int, queue_depth: int | None = None) -> None:
        """Claim an id. Raises RegistrationError if already taken."""
        with self._lock:
            if agent_id in self._conds:
                raise RegistrationError("agent id %d already registered" % agent_id)
            self._conds[agent_id] = threading.Condition(self._lock)
            self._depths[agent_id] = queue_depth

    def registered(self, agent_id: int) -> bool:
        with self._lock:
            return agent_id in self._conds

    def _wake_all(self) -> None:
        with self._lock:
            for cond in self._conds.values():
                cond.notify_all()

    def _link(self, src: int, dst: int) -> _Link:
        link = self._links.get((src, dst))
        if link is None:
            link = _Link(self._depths.get(dst))
            self._links[(src, dst)] = link
        return link

    def deliver(self, src: int, dst: int, env: Envelope, deliver_at: float | None = None) -> None:
        """Queue a message on the (src, dst) link and wake the receiver."""
        at = self.clock.now() if deliver_at is None else deliver_at
        with self._lock:
            if dst not in self._conds:
                raise RegistrationError("agent id %d is not registered" % dst)
            link = self._link(src, dst)
            link.queue.append((at, env))
            if link.depth is not None:
                while len(link.queue) > link.depth:
                    link.queue.popleft()
            self._conds[dst].notify_all()

    def _deliverable(self, link: _Link) -> int:
        """Number of head-of-line messages whose delivery time has passed."""
        now = self.clock.now()
        count = 0
        for at, _ in link.queue:
            if at > now:
                break
            count += 1
        return count

    def pop_next(self, dst: int, src: int, round: int | None = None,
                 timeout: float | None = None) -> Envelope | None:
        """Next deliverable envelope from ``src``, blocking up to ``timeout``.

        With ``round`` given, waits for the first envelope tagged with that
        round and discards older-round envelopes queued ahead of it. Returns
        None on timeout (timeout=0 polls without blocking).
        """
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            cond = self._conds[dst]
            link = self._link(src, dst)
            while True:
                ready = self._deliverable(link)
                if round is None:
                    if ready:
                        return link.queue.popleft()[1]
                else:
                    hit = None
                    for k in range(ready):
                        if link.queue[k][1].round == round:
                            hit = k
                            break
                    if hit is not None:
                        for _ in range(hit):
                            link.queue.popleft()
                        return link.queue.popleft()[1]
                if deadline is not None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        return None
                    cond.wait(remaining)
                else:
                    cond.wait()

    def pop_newest(self, dst: int, src: int) -> Envelope | None:
        """Newest deliverable envelope from ``src`` without blocking.

        Older deliverable messages stay queued (FIFO order preserved for
        later sequential receives).
        """
        with self._lock:
            link = self._link(src, dst)
            ready = self._deliverable(link)
            if not ready:
                return None
            at_env = link.queue[ready - 1]
            del link.queue[ready - 1]
            return at_env[1]

    def drain(self, dst: int, src: int) -> list[Envelope]:
        """All deliverable envelopes from ``src`` in FIFO order, non-blocking."""
        with self._lock:
            link = self._link(src, dst)
            ready = self._deliverable(link)
            return [link.queue.popleft()[1] for _ in range(ready)]

    def pending(self, dst: int, src: int) -> int:
        with self._lock:
            return self._deliverable(self._link(src, dst))
