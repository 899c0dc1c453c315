"""Distribution agent: turns alarms into alerts for interested users."""

from __future__ import annotations

import json
import logging
import os
from typing import Iterable, Optional, Sequence

from ..core import MEDIA, Alarm, Alert, UserProfile, to_iso
from .bus import Agent
from .messages import FAILURE, INFORM, NOT_UNDERSTOOD, AgentMessage, NotUnderstood, RaiseAlarm

logger = logging.getLogger(__name__)

SMS_LIMIT = 160

TEMPLATES = {
    "email": ("Subject: [{severity}] {kind} alarm {channel}\n\n"
              "{message}\n\nTime: {at}\nRule: {rule_id}\n"),
    "sms": "{SEVERITY} {kind} {channel} {at}: {message}",
}

OUTBOX_NAMES = {m: f"{m}.outbox.jsonl" for m in MEDIA}
ALARM_LOG_NAME = "alarms.jsonl"


def render(alarm: Alarm, medium: str, templates: Optional[dict] = None) -> str:
    t = (templates or TEMPLATES)[medium]
    text = t.format(severity=alarm.severity, SEVERITY=alarm.severity.upper(), kind=alarm.kind,
                    channel=alarm.channel or "station", at=to_iso(alarm.at),
                    rule_id=alarm.rule_id, message=alarm.message)
    if medium == "sms" and len(text) > SMS_LIMIT:
        text = text[:SMS_LIMIT - 3] + "..."
    return text


def dist_route(profiles: Iterable[UserProfile], alarm: Alarm,
               templates: Optional[dict] = None) -> list[Alert]:
    """One alert per profile interested in the alarm, in profile order."""
    return [Alert(alarm, p.user_id, p.medium, render(alarm, p.medium, templates))
            for p in profiles if p.wants(alarm)]


def alert_record(alert: Alert) -> dict:
    a = alert.alarm
    return {"at": to_iso(a.at), "kind": a.kind, "channel": a.channel, "rule_id": a.rule_id,
            "severity": a.severity, "recipient": alert.recipient, "rendered": alert.rendered}


class JsonLines:
    """Append-only JSON-lines file, flushed after every record."""

    def __init__(self, path):
        self.path = os.fspath(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self.count = 0

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")
        self._fh.flush()
        self.count += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class DistributionAgent(Agent):
    """Routes each raised alarm to matching profiles on their chosen medium.

    Each (alarm identity, user) pair is delivered at most once per run.
    """

    def __init__(self, profiles: Sequence[UserProfile], outboxes: dict,
                 alarm_log: Optional[JsonLines] = None, templates: Optional[dict] = None,
                 agent_id: str = "distribution"):
        super().__init__(agent_id)
        self.profiles = tuple(profiles)
        self.outboxes = outboxes
        self.alarm_log = alarm_log
        self.templates = templates
        self.delivered: set = set()
        self.alerts_by_medium = {m: 0 for m in MEDIA}
        self.undelivered = 0
        self.alarms_seen = 0

    def handle(self, message: AgentMessage) -> list[AgentMessage]:
        c = message.content
        if message.performative == INFORM and isinstance(c, RaiseAlarm):
            self._route(c.alarm)
            return []
        if message.performative in (NOT_UNDERSTOOD, FAILURE):
            logger.warning("%s from %s ignored", message.performative, message.sender)
            return []
        return [AgentMessage(NOT_UNDERSTOOD, self.agent_id, message.sender,
                             message.conversation_id,
                             NotUnderstood(message.conversation_id,
                                           f"{type(c).__name__} not understood by {self.agent_id}"))]

    def _route(self, alarm: Alarm) -> None:
        self.alarms_seen += 1
        sent = 0
        for alert in dist_route(self.profiles, alarm, self.templates):
            key = (alarm.identity, alert.recipient)
            if key in self.delivered:
                continue
            self.delivered.add(key)
            self.outboxes[alert.medium].write(alert_record(alert))
            self.alerts_by_medium[alert.medium] += 1
            sent += 1
        if sent == 0:
            self.undelivered += 1
            logger.info("alarm %s matched no profile", alarm.identity)
        if self.alarm_log is not None:
            self.alarm_log.write({"at": to_iso(alarm.at), "kind": alarm.kind,
                                  "channel": alarm.channel, "rule_id": alarm.rule_id,
                                  "severity": alarm.severity, "message": alarm.message,
                                  "delivered": sent})

    def close(self) -> None:
        for box in self.outboxes.values():
            box.close()
        if self.alarm_log is not None:
            self.alarm_log.close()
