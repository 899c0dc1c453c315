"""Diagnosis agent: validates one sensor channel and qualifies its readings."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from ..core import (
    CHANNELS,
    DEFAULT_BINS,
    INVALID,
    LEVELS,
    MEDIUM,
    SANITY_RANGES,
    STEADY,
    VALID,
    LevelBins,
    Measurement,
    QualifiedMeasurement,
    placeholder,
    qualify_level,
    qualify_trend,
    update_persistence,
)
from ..induction.features import HISTORY, validation_features
from ..rulekit import ModelDocument, compile_rules, eval_rules
from .bus import Agent
from .messages import (
    ALARM_ID,
    FAILURE,
    INFORM,
    NOT_UNDERSTOOD,
    REQUEST,
    AbsentNotice,
    AgentMessage,
    NewMeasurement,
    NotUnderstood,
    RequestMeasurement,
    SendMeasurement,
    SensorMalfunction,
    diagnosis_id,
    is_diagnosis,
)

logger = logging.getLogger(__name__)


class ModelEngine:
    """A decision model with its compiled rules; rules serve complete inputs."""

    def __init__(self, doc: ModelDocument):
        self.doc = doc
        self.tree = doc.tree
        self.rules = compile_rules(doc.tree)
        self.features = doc.tree.features

    def classify(self, x) -> str:
        for v in x:
            if v is None:
                return self.tree.predict(x)[0]
        return eval_rules(self.rules, x)


@dataclass
class _PendingEstimate:
    at: int
    absent: bool
    awaiting: dict = field(default_factory=dict)  # conversation id -> channel
    peer_values: dict = field(default_factory=dict)


class DiagnosisAgent(Agent):
    """Monitors one channel.

    New readings are validated with the IMV model (or a physical range check
    when no model or not enough history is available).  Valid readings are
    qualified and forwarded; invalid or absent readings get a qualitative
    estimate from the MVE model, which may first query peer agents for their
    concurrent values.  ``malfunction_k`` consecutive invalid readings raise a
    single malfunction notice until the sensor recovers.
    """

    def __init__(self, channel: str, imv: Optional[ModelDocument] = None,
                 mve: Optional[ModelDocument] = None, bins: Optional[LevelBins] = None,
                 epsilon: float = 0.5, trend_window: int = 3, malfunction_k: int = 4,
                 sanity: Optional[tuple] = None, alarm_id: str = ALARM_ID):
        super().__init__(diagnosis_id(channel))
        self.channel = channel
        self.imv = ModelEngine(imv) if imv is not None else None
        self.mve = ModelEngine(mve) if mve is not None else None
        self.bins = bins or DEFAULT_BINS[channel]
        self.epsilon = epsilon
        self.trend_window = trend_window
        self.malfunction_k = malfunction_k
        self.sanity = sanity or SANITY_RANGES[channel]
        self.alarm_id = alarm_id
        self.history: deque = deque(maxlen=HISTORY)
        self.valid_history: deque = deque(maxlen=max(trend_window, 2))
        self.last: Optional[QualifiedMeasurement] = None
        self.last_valid_level: Optional[str] = None
        self.consecutive_invalid = 0
        self.malfunction_latched = False
        self.bootstrapped = 0
        self.pending: Optional[_PendingEstimate] = None
        self._peer_channels = ()
        if self.mve is not None:
            self._peer_channels = tuple(c for c in CHANNELS
                                        if c != channel and c in self.mve.features)

    # -- message dispatch -------------------------------------------------

    def handle(self, message: AgentMessage) -> list[AgentMessage]:
        c = message.content
        p = message.performative
        if p == INFORM and isinstance(c, NewMeasurement) and c.measurement.channel == self.channel:
            return self._flush_pending() + self._on_reading(c.measurement.at, c.measurement.value)
        if p == INFORM and isinstance(c, AbsentNotice) and c.channel == self.channel:
            return self._flush_pending() + self._on_reading(c.at, None)
        if p == REQUEST and isinstance(c, RequestMeasurement) and c.channel == self.channel:
            current = self.last or placeholder(self.channel, 0)
            return [AgentMessage(INFORM, self.agent_id, message.sender, message.conversation_id,
                                 SendMeasurement(current.at, current))]
        if (p == INFORM and isinstance(c, SendMeasurement) and self.pending is not None
                and message.conversation_id in self.pending.awaiting):
            return self._on_peer_reply(message.conversation_id, c.measurement)
        if p == INFORM and isinstance(c, SendMeasurement) and is_diagnosis(message.sender):
            logger.debug("%s: stale peer reply %s", self.agent_id, message.conversation_id)
            return []
        if p in (NOT_UNDERSTOOD, FAILURE):
            # never answer an error with an error
            logger.warning("%s got %s from %s: %s", self.agent_id, p, message.sender, c.reason)
            return []
        return [AgentMessage(NOT_UNDERSTOOD, self.agent_id, message.sender,
                             message.conversation_id,
                             NotUnderstood(message.conversation_id,
                                           f"{type(c).__name__} not understood by {self.agent_id}"))]

    def on_idle(self) -> list[AgentMessage]:
        return self._flush_pending()

    # -- validation --------------------------------------------------------

    def _in_range(self, value: float) -> bool:
        lo, hi = self.sanity
        return lo <= value <= hi

    def _is_valid(self, value: Optional[float]) -> bool:
        if value is None:
            return False
        if self.imv is None:
            return self._in_range(value)
        x = validation_features(self.history)
        if x is None:
            # bootstrap: not enough history for the validation model yet
            self.bootstrapped += 1
            return self._in_range(value)
        return self.imv.classify(x) == VALID

    def _on_reading(self, at: int, value: Optional[float]) -> list[AgentMessage]:
        self.history.append(value)
        if self._is_valid(value):
            return self._emit_valid(at, value)
        self.consecutive_invalid += 1
        if self.mve is not None and self._peer_channels:
            self.pending = _PendingEstimate(at, value is None)
            out = []
            for ch in self._peer_channels:
                conv = self.new_conversation()
                self.pending.awaiting[conv] = ch
                out.append(AgentMessage(REQUEST, self.agent_id, diagnosis_id(ch), conv,
                                        RequestMeasurement(ch)))
            return out
        return self._emit_estimate(at, {})

    def _emit_valid(self, at: int, value: float) -> list[AgentMessage]:
        self.valid_history.append(value)
        level = qualify_level(value, self.bins)
        window = list(self.valid_history)[-self.trend_window:]
        qm = QualifiedMeasurement(
            Measurement(self.channel, at, value), VALID, level,
            qualify_trend(window, self.epsilon), update_persistence(self.last, level), False,
        )
        self.last = qm
        self.last_valid_level = level
        self.consecutive_invalid = 0
        self.malfunction_latched = False
        return [AgentMessage(INFORM, self.agent_id, self.alarm_id, self.new_conversation(),
                             SendMeasurement(at, qm))]

    # -- estimation --------------------------------------------------------

    def _on_peer_reply(self, conv: str, qm: QualifiedMeasurement) -> list[AgentMessage]:
        pending = self.pending
        ch = pending.awaiting.pop(conv)
        pending.peer_values[ch] = qm.usable_value if qm.at == pending.at else None
        if pending.awaiting:
            return []
        return self._flush_pending()

    def _flush_pending(self) -> list[AgentMessage]:
        pending = self.pending
        if pending is None:
            return []
        self.pending = None
        return self._emit_estimate(pending.at, pending.peer_values)

    def _estimate_level(self, peer_values: dict) -> str:
        if self.mve is None:
            return self.last_valid_level or MEDIUM
        lags = list(self.valid_history)
        own = {f"{self.channel}_lag1": lags[-1] if lags else None,
               f"{self.channel}_lag2": lags[-2] if len(lags) > 1 else None}
        x = [peer_values.get(f, own.get(f)) for f in self.mve.features]
        level = self.mve.classify(x)
        return level if level in LEVELS else MEDIUM

    def _emit_estimate(self, at: int, peer_values: dict) -> list[AgentMessage]:
        level = self._estimate_level(peer_values)
        qm = QualifiedMeasurement(Measurement(self.channel, at, None), INVALID, level, STEADY,
                                  update_persistence(self.last, level), True)
        self.last = qm
        out = [AgentMessage(INFORM, self.agent_id, self.alarm_id, self.new_conversation(),
                            SendMeasurement(at, qm))]
        if self.consecutive_invalid >= self.malfunction_k and not self.malfunction_latched:
            self.malfunction_latched = True
            logger.info("%s: %d consecutive invalid readings", self.channel,
                        self.consecutive_invalid)
            out.append(AgentMessage(INFORM, self.agent_id, self.alarm_id, self.new_conversation(),
                                    SensorMalfunction(self.channel, at, self.consecutive_invalid)))
        return out
