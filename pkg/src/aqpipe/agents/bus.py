"""Message bus with actor semantics.

Two schedulers share one contract: reliable per-pair FIFO delivery and
run-to-completion handling.  :class:`DeterministicBus` is single-threaded and
drains agents in registration order, which makes message logs reproducible.
:class:`ThreadedBus` gives every agent its own worker thread.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from collections import deque
from typing import Callable, Iterable, Optional

from .messages import FAILURE, AgentMessage, Failure

logger = logging.getLogger(__name__)


class BusClosed(RuntimeError):
    pass


class Agent:
    """Base class; subclasses own their state and override :meth:`handle`."""

    agent_id: str = "agent"

    def __init__(self, agent_id: Optional[str] = None):
        if agent_id is not None:
            self.agent_id = agent_id
        self._conv = 0

    def new_conversation(self) -> str:
        self._conv += 1
        return f"{self.agent_id}#{self._conv}"

    def handle(self, message: AgentMessage) -> list[AgentMessage]:
        raise NotImplementedError

    def on_idle(self) -> list[AgentMessage]:
        return []

    def close(self) -> None:
        pass


class Sink(Agent):
    """Endpoint for external producers; keeps whatever is sent back to it."""

    def __init__(self, agent_id: str):
        super().__init__(agent_id)
        self.received: list[AgentMessage] = []

    def handle(self, message):
        self.received.append(message)
        return []


class MessageLog:
    """Append-only JSON-lines log of every message accepted by the bus."""

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._seq = 0
        self._dumps = json.JSONEncoder(separators=(",", ":"), ensure_ascii=False,
                                      check_circular=False).encode

    def __call__(self, message: AgentMessage) -> None:
        d = message.to_dict()
        self._seq += 1
        self._fh.write('{"seq":%d,%s\n' % (self._seq, self._dumps(d)[1:]))

    def close(self) -> None:
        self._fh.close()


class _BaseBus:
    def __init__(self, log: Optional[Callable[[AgentMessage], None]] = None):
        self._agents: dict[str, Agent] = {}
        self._order: list[Agent] = []
        self._log = log
        self.closed = False
        self.failures = 0
        self.sent = 0
        self.edges: set[tuple[str, str]] = set()

    def register(self, agent: Agent) -> Agent:
        if agent.agent_id in self._agents:
            raise ValueError(f"duplicate agent id {agent.agent_id!r}")
        self._agents[agent.agent_id] = agent
        self._order.append(agent)
        return agent

    def agent(self, agent_id: str) -> Agent:
        return self._agents[agent_id]

    @property
    def agents(self) -> list[Agent]:
        return list(self._order)

    def _accept(self, message: AgentMessage) -> Optional[AgentMessage]:
        """Log the message; return the one to enqueue (a FAILURE if undeliverable)."""
        if self.closed:
            raise BusClosed("bus is closed")
        if message.receiver not in self._agents:
            logger.warning("unknown receiver %s from %s", message.receiver, message.sender)
            if message.sender not in self._agents:
                return None
            message = AgentMessage(
                FAILURE, "bus", message.sender, message.conversation_id,
                Failure(message.conversation_id, f"unknown receiver {message.receiver}"),
            )
        if message.performative == FAILURE:
            self.failures += 1
        self.sent += 1
        self.edges.add((message.sender, message.receiver))
        if self._log is not None:
            self._log(message)
        return message

    def close(self) -> None:
        self.closed = True
        for a in self._order:
            a.close()


class DeterministicBus(_BaseBus):
    """Single-threaded scheduler.

    Each round visits agents in registration order and lets each drain its
    mailbox; outputs are enqueued immediately, so a later agent in the same
    round may already see them.
    """

    def __init__(self, log=None):
        super().__init__(log)
        self._mailboxes: dict[str, deque] = {}
        self._pending = 0

    def register(self, agent):
        super().register(agent)
        self._mailboxes[agent.agent_id] = deque()
        return agent

    def send(self, message: AgentMessage) -> None:
        message = self._accept(message)
        if message is not None:
            self._mailboxes[message.receiver].append(message)
            self._pending += 1

    def send_all(self, messages: Iterable[AgentMessage]) -> None:
        for m in messages:
            self.send(m)

    @property
    def idle(self) -> bool:
        return self._pending == 0

    def step(self) -> int:
        """Run one scheduling round; return the number of messages handled."""
        handled = 0
        send = self.send
        for agent in self._order:
            box = self._mailboxes[agent.agent_id]
            while box:
                msg = box.popleft()
                self._pending -= 1
                handled += 1
                for out in agent.handle(msg):
                    send(out)
        return handled

    def run_until_idle(self, max_rounds: int = 1_000_000) -> int:
        total = 0
        for _ in range(max_rounds):
            if self._pending == 0:
                return total
            total += self.step()
        raise RuntimeError("bus did not reach idle")

    def tick_idle(self) -> None:
        """Deliver one idle step to every agent, then settle."""
        for agent in self._order:
            for out in agent.on_idle():
                self.send(out)
        self.run_until_idle()


_IDLE = object()
_STOP = object()


class ThreadedBus(_BaseBus):
    """One worker thread per agent; idle detection by outstanding-work count."""

    def __init__(self, log=None):
        super().__init__(log)
        self._queues: dict[str, queue.SimpleQueue] = {}
        self._threads: list[threading.Thread] = []
        self._lock = threading.Lock()
        self._cv = threading.Condition(self._lock)
        self._outstanding = 0
        self._started = False
        self.errors: list[BaseException] = []

    def register(self, agent):
        super().register(agent)
        self._queues[agent.agent_id] = queue.SimpleQueue()
        return agent

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for agent in self._order:
            t = threading.Thread(target=self._worker, args=(agent,),
                                 name=agent.agent_id, daemon=True)
            t.start()
            self._threads.append(t)

    def _worker(self, agent: Agent) -> None:
        q = self._queues[agent.agent_id]
        while True:
            item = q.get()
            if item is _STOP:
                return
            try:
                outs = agent.on_idle() if item is _IDLE else agent.handle(item)
                for out in outs:
                    self.send(out)
            except BaseException as exc:  # surfaced by run_until_idle
                logger.exception("agent %s crashed", agent.agent_id)
                self.errors.append(exc)
            finally:
                with self._cv:
                    self._outstanding -= 1
                    if self._outstanding == 0:
                        self._cv.notify_all()

    def send(self, message: AgentMessage) -> None:
        self.start()
        with self._lock:
            message = self._accept(message)
            if message is None:
                return
            self._outstanding += 1
        self._queues[message.receiver].put(message)

    def send_all(self, messages):
        for m in messages:
            self.send(m)

    @property
    def idle(self) -> bool:
        with self._lock:
            return self._outstanding == 0

    def run_until_idle(self, timeout: float = 600.0) -> int:
        self.start()
        with self._cv:
            if not self._cv.wait_for(lambda: self._outstanding == 0, timeout):
                raise RuntimeError("bus did not reach idle")
        if self.errors:
            raise RuntimeError("agent crashed") from self.errors[0]
        return 0

    def step(self) -> int:
        return 0

    def tick_idle(self) -> None:
        self.start()
        for agent in self._order:
            with self._lock:
                self._outstanding += 1
            self._queues[agent.agent_id].put(_IDLE)
        self.run_until_idle()

    def close(self) -> None:
        if self._started:
            self.run_until_idle()
            for agent in self._order:
                self._queues[agent.agent_id].put(_STOP)
            for t in self._threads:
                t.join()
        super().close()
