"""ACL-style messages exchanged between agents.

Every message carries a performative and exactly one typed predicate.  The
predicate set is closed; ``to_dict``/``from_dict`` give the JSON form used in
``messages.jsonl``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..core import (
    CHANNELS,
    Alarm,
    Measurement,
    MeasurementTuple,
    QualifiedMeasurement,
)

INFORM = "INFORM"
REQUEST = "REQUEST"
NOT_UNDERSTOOD = "NOT-UNDERSTOOD"
FAILURE = "FAILURE"
PERFORMATIVES = (INFORM, REQUEST, NOT_UNDERSTOOD, FAILURE)


@dataclass(frozen=True, slots=True)
class NewMeasurement:
    """Raw reading pushed by the sensor feed."""
    measurement: Measurement


@dataclass(frozen=True, slots=True)
class AbsentNotice:
    channel: str
    at: int


@dataclass(frozen=True, slots=True)
class SendMeasurement:
    at: int
    measurement: QualifiedMeasurement


@dataclass(frozen=True, slots=True)
class RequestMeasurement:
    channel: str


@dataclass(frozen=True, slots=True)
class SensorMalfunction:
    channel: str
    at: int
    consecutive_invalid: int


@dataclass(frozen=True, slots=True)
class StoreTuple:
    tuple: MeasurementTuple


@dataclass(frozen=True, slots=True)
class RaiseAlarm:
    alarm: Alarm


@dataclass(frozen=True, slots=True)
class NotUnderstood:
    conversation_id: str
    reason: str


@dataclass(frozen=True, slots=True)
class Failure:
    conversation_id: str
    reason: str


Predicate = Union[
    NewMeasurement, AbsentNotice, SendMeasurement, RequestMeasurement,
    SensorMalfunction, StoreTuple, RaiseAlarm, NotUnderstood, Failure,
]

_LEGAL = {
    INFORM: (NewMeasurement, AbsentNotice, SendMeasurement, SensorMalfunction, RaiseAlarm),
    REQUEST: (RequestMeasurement, StoreTuple),
    NOT_UNDERSTOOD: (NotUnderstood,),
    FAILURE: (Failure,),
}

PREDICATE_NAMES = {
    NewMeasurement: "newMeasurement",
    AbsentNotice: "absentNotice",
    SendMeasurement: "sendMeasurement",
    RequestMeasurement: "requestMeasurement",
    SensorMalfunction: "sensorMalfunction",
    StoreTuple: "storeTuple",
    RaiseAlarm: "raiseAlarm",
    NotUnderstood: "notUnderstood",
    Failure: "failure",
}


@dataclass(frozen=True, slots=True)
class AgentMessage:
    performative: str
    sender: str
    receiver: str
    conversation_id: str
    content: Predicate

    def __post_init__(self):
        legal = _LEGAL.get(self.performative)
        if legal is None:
            raise ValueError(f"unknown performative {self.performative!r}")
        if type(self.content) not in legal:
            raise ValueError(
                f"{type(self.content).__name__} is not legal content for {self.performative}"
            )

    def to_dict(self) -> dict:
        return {
            "performative": self.performative,
            "sender": self.sender,
            "receiver": self.receiver,
            "conversation_id": self.conversation_id,
            "content": predicate_to_dict(self.content),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentMessage":
        return cls(d["performative"], d["sender"], d["receiver"],
                   d["conversation_id"], predicate_from_dict(d["content"]))


def _measurement_dict(m: Measurement) -> dict:
    return {"channel": m.channel, "at": m.at, "value": m.value}


def qualified_to_dict(qm: QualifiedMeasurement) -> dict:
    return {
        "channel": qm.base.channel,
        "at": qm.base.at,
        "value": qm.base.value,
        "tag": qm.tag,
        "level": qm.level,
        "trend": qm.trend,
        "persistence": qm.persistence,
        "estimated": qm.estimated,
    }


def qualified_from_dict(d: dict) -> QualifiedMeasurement:
    return QualifiedMeasurement(
        Measurement(d["channel"], d["at"], d["value"]),
        d["tag"], d["level"], d["trend"], d["persistence"], d["estimated"],
    )


def alarm_to_dict(a: Alarm) -> dict:
    return {"kind": a.kind, "at": a.at, "channel": a.channel, "rule_id": a.rule_id,
            "severity": a.severity, "message": a.message}


def predicate_to_dict(p: Predicate) -> dict:
    name = PREDICATE_NAMES[type(p)]
    if isinstance(p, NewMeasurement):
        body = _measurement_dict(p.measurement)
    elif isinstance(p, SendMeasurement):
        body = {"at": p.at, "measurement": qualified_to_dict(p.measurement)}
    elif isinstance(p, StoreTuple):
        t = p.tuple
        body = {"at": t.at, "complete": t.complete,
                "entries": [qualified_to_dict(e) for e in t.entries]}
    elif isinstance(p, RaiseAlarm):
        body = alarm_to_dict(p.alarm)
    elif isinstance(p, AbsentNotice):
        body = {"channel": p.channel, "at": p.at}
    elif isinstance(p, RequestMeasurement):
        body = {"channel": p.channel}
    elif isinstance(p, SensorMalfunction):
        body = {"channel": p.channel, "at": p.at, "consecutive_invalid": p.consecutive_invalid}
    else:
        body = {"conversation_id": p.conversation_id, "reason": p.reason}
    return {"type": name, **body}


def predicate_from_dict(d: dict) -> Predicate:
    kind = d["type"]
    if kind == "newMeasurement":
        return NewMeasurement(Measurement(d["channel"], d["at"], d["value"]))
    if kind == "sendMeasurement":
        return SendMeasurement(d["at"], qualified_from_dict(d["measurement"]))
    if kind == "storeTuple":
        entries = tuple(qualified_from_dict(e) for e in d["entries"])
        return StoreTuple(MeasurementTuple(d["at"], entries, d["complete"]))
    if kind == "raiseAlarm":
        return RaiseAlarm(Alarm(d["kind"], d["at"], d["channel"], d["rule_id"],
                                d["severity"], d["message"]))
    if kind == "absentNotice":
        return AbsentNotice(d["channel"], d["at"])
    if kind == "requestMeasurement":
        return RequestMeasurement(d["channel"])
    if kind == "sensorMalfunction":
        return SensorMalfunction(d["channel"], d["at"], d["consecutive_invalid"])
    if kind == "notUnderstood":
        return NotUnderstood(d["conversation_id"], d["reason"])
    if kind == "failure":
        return Failure(d["conversation_id"], d["reason"])
    raise ValueError(f"unknown predicate type {kind!r}")


def diagnosis_id(channel: str) -> str:
    return f"diagnosis.{channel}"


DIAGNOSIS_IDS = tuple(diagnosis_id(c) for c in CHANNELS)
ALARM_ID = "alarm"
DATABASE_ID = "database"
DISTRIBUTION_ID = "distribution"
FEED_ID = "feed"


def is_diagnosis(agent_id: Optional[str]) -> bool:
    return bool(agent_id) and agent_id.startswith("diagnosis.")
