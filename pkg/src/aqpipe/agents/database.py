"""Database agent and its append-only tuple store."""

from __future__ import annotations

import csv
import io
import logging
import os
from typing import Optional

from ..core import CHANNELS, VALID, MeasurementTuple, to_iso
from .bus import Agent
from .messages import (
    ALARM_ID,
    FAILURE,
    NOT_UNDERSTOOD,
    REQUEST,
    AgentMessage,
    Failure,
    NotUnderstood,
    StoreTuple,
)

logger = logging.getLogger(__name__)

SLOTS = ("value", "tag", "level", "trend", "persistence", "estimated")
STORE_HEADER = ("timestamp", "complete") + tuple(f"{ch}_{s}" for ch in CHANNELS for s in SLOTS)


def tuple_row(tup: MeasurementTuple) -> list[str]:
    row = [to_iso(tup.at), "1" if tup.complete else "0"]
    for qm in tup.entries:
        v = qm.value
        row += ["" if v is None else repr(float(v)), "V" if qm.tag == VALID else "I",
                qm.level or "", qm.trend, str(qm.persistence), "1" if qm.estimated else "0"]
    return row


class TupleStore:
    """CSV table with one row per tuple, flushed after every append."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="")
        self.rows = 0
        self._write(self._encode(STORE_HEADER))

    @staticmethod
    def _encode(row) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(row)
        return buf.getvalue()

    def _write(self, text: str) -> None:
        self._fh.write(text)
        self._fh.flush()

    def append(self, tup: MeasurementTuple) -> None:
        self._write(self._encode(tuple_row(tup)))
        self.rows += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def read_tuples(path) -> list[dict]:
    """Rows of a tuple store as dicts keyed by header name."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != STORE_HEADER:
            raise ValueError(f"{path}: not a tuple store")
        return [dict(zip(header, row)) for row in reader]


class DatabaseAgent(Agent):
    """Persists every storeTuple request; write errors are reported and retried once."""

    def __init__(self, store: TupleStore, agent_id: str = "database", alarm_id: str = ALARM_ID):
        super().__init__(agent_id)
        self.store = store
        self.alarm_id = alarm_id
        self.dropped = 0

    def handle(self, message: AgentMessage) -> list[AgentMessage]:
        c = message.content
        if message.performative == REQUEST and isinstance(c, StoreTuple):
            return self._persist(message, c.tuple)
        if message.performative in (NOT_UNDERSTOOD, FAILURE):
            logger.warning("%s from %s ignored", message.performative, message.sender)
            return []
        return [AgentMessage(NOT_UNDERSTOOD, self.agent_id, message.sender,
                             message.conversation_id,
                             NotUnderstood(message.conversation_id,
                                           f"{type(c).__name__} not understood by {self.agent_id}"))]

    def _persist(self, message: AgentMessage, tup: MeasurementTuple) -> list[AgentMessage]:
        error: Optional[OSError] = None
        for _ in range(2):
            try:
                self.store.append(tup)
                break
            except OSError as exc:
                error = exc
        else:
            self.dropped += 1
            logger.error("tuple %s dropped after retry: %s", to_iso(tup.at), error)
        if error is None:
            return []
        return [AgentMessage(FAILURE, self.agent_id, self.alarm_id, message.conversation_id,
                             Failure(message.conversation_id,
                                     f"store write failed for {to_iso(tup.at)}: {error}"))]

    def close(self) -> None:
        self.store.close()
