"""Alarm agent: joins per-channel measurements into tuples and raises alarms."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

from ..core import ALARM_KINDS, CHANNELS, CUSTOM, MALFUNCTION, Alarm, MeasurementTuple, placeholder, to_iso
from ..rulekit import DEFAULT_THRESHOLDS, ModelDocument, ThresholdRule, fat_evaluate
from .bus import Agent
from .diagnosis import ModelEngine
from .messages import (
    DATABASE_ID,
    DISTRIBUTION_ID,
    FAILURE,
    INFORM,
    NOT_UNDERSTOOD,
    REQUEST,
    AgentMessage,
    NotUnderstood,
    RaiseAlarm,
    SendMeasurement,
    SensorMalfunction,
    StoreTuple,
)

logger = logging.getLogger(__name__)

ALARM_CLASS = "alarm"


class AlarmAgent(Agent):
    """Assembles tuples and runs the storage, formal and custom activities.

    A pending timestamp closes when all channels have reported, when a
    measurement for a newer timestamp arrives (watermark), or after
    ``timeout`` consecutive idle ticks.  Missing channels are filled with
    placeholders and the tuple is marked incomplete.
    """

    def __init__(self, thresholds: Sequence[ThresholdRule] = DEFAULT_THRESHOLDS,
                 ica: Optional[ModelDocument] = None, timeout: int = 2,
                 agent_id: str = "alarm", database_id: str = DATABASE_ID,
                 distribution_id: str = DISTRIBUTION_ID):
        super().__init__(agent_id)
        self.thresholds = tuple(thresholds)
        self.ica = ModelEngine(ica) if ica is not None else None
        self.ica_doc = ica
        self.timeout = timeout
        self.database_id = database_id
        self.distribution_id = distribution_id
        self.pending: dict[int, dict] = {}
        self.idle_age: dict[int, int] = {}
        self.closed_through: Optional[int] = None
        self.tuples_closed = 0
        self.incomplete = 0
        self.duplicates = 0
        self.late = 0
        self.failures_seen = 0
        self.alarms_raised = {k: 0 for k in ALARM_KINDS}

    def handle(self, message: AgentMessage) -> list[AgentMessage]:
        c = message.content
        p = message.performative
        if p == INFORM and isinstance(c, SendMeasurement):
            return self._on_measurement(c.measurement)
        if p == INFORM and isinstance(c, SensorMalfunction):
            alarm = Alarm(MALFUNCTION, c.at, c.channel, f"malfunction-k{c.consecutive_invalid}",
                          "warning", f"{c.channel} sensor reported {c.consecutive_invalid} "
                          f"consecutive invalid readings by {to_iso(c.at)}")
            return [self._raise(alarm)]
        if p == FAILURE:
            self.failures_seen += 1
            logger.error("failure reported by %s: %s", message.sender, c.reason)
            return []
        if p == NOT_UNDERSTOOD:
            logger.warning("%s did not understand %s", message.sender, c.conversation_id)
            return []
        return [AgentMessage(NOT_UNDERSTOOD, self.agent_id, message.sender,
                             message.conversation_id,
                             NotUnderstood(message.conversation_id,
                                           f"{type(c).__name__} not understood by {self.agent_id}"))]

    def on_idle(self) -> list[AgentMessage]:
        out = []
        for at in sorted(self.pending):
            self.idle_age[at] = self.idle_age.get(at, 0) + 1
            if self.idle_age[at] >= self.timeout:
                out += self._close(at)
        return out

    def flush(self) -> list[AgentMessage]:
        """Close every pending timestamp regardless of age."""
        out = []
        for at in sorted(self.pending):
            out += self._close(at)
        return out

    # -- assembly ----------------------------------------------------------

    def _on_measurement(self, qm) -> list[AgentMessage]:
        at = qm.at
        if self.closed_through is not None and at <= self.closed_through:
            self.late += 1
            logger.warning("late measurement %s@%s dropped", qm.channel, to_iso(at))
            return []
        out = []
        for older in sorted(t for t in self.pending if t < at):
            out += self._close(older)
        entries = self.pending.setdefault(at, {})
        self.idle_age[at] = 0
        if qm.channel in entries:
            self.duplicates += 1
            logger.warning("duplicate %s@%s ignored", qm.channel, to_iso(at))
            return out
        entries[qm.channel] = qm
        if len(entries) == len(CHANNELS):
            out += self._close(at)
        return out

    def _close(self, at: int) -> list[AgentMessage]:
        entries = self.pending.pop(at)
        self.idle_age.pop(at, None)
        complete = len(entries) == len(CHANNELS)
        tup = MeasurementTuple(at, tuple(entries.get(ch) or placeholder(ch, at)
                                         for ch in CHANNELS), complete)
        self.closed_through = at if self.closed_through is None else max(self.closed_through, at)
        self.tuples_closed += 1
        if not complete:
            self.incomplete += 1
        # fixed activity order: store, formal alarms, custom alarms
        out = [AgentMessage(REQUEST, self.agent_id, self.database_id, self.new_conversation(),
                            StoreTuple(tup))]
        for alarm in fat_evaluate(self.thresholds, tup):
            out.append(self._raise(alarm))
        custom = self._ica(tup)
        if custom is not None:
            out.append(self._raise(custom))
        return out

    def _ica(self, tup: MeasurementTuple) -> Optional[Alarm]:
        if self.ica is None:
            return None
        x = [tup[f].usable_value if f in CHANNELS else None for f in self.ica.features]
        if self.ica.classify(x) != ALARM_CLASS:
            return None
        doc = self.ica_doc
        channel = doc.channel
        return Alarm(CUSTOM, tup.at, channel, doc.model_id, "warning",
                     f"custom event predicted for {channel or 'station'} at {to_iso(tup.at)}")

    def _raise(self, alarm: Alarm) -> AgentMessage:
        self.alarms_raised[alarm.kind] = self.alarms_raised.get(alarm.kind, 0) + 1
        return AgentMessage(INFORM, self.agent_id, self.distribution_id, self.new_conversation(),
                            RaiseAlarm(alarm))
