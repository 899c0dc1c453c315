"""Wiring of the full agent society and one-call pipeline runs."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..config import Config, LoadedModels, load_models
from ..core import ALARM_KINDS, CHANNELS, MEDIA
from ..ingest import StationLogRecord, replay
from .alarm import AlarmAgent
from .bus import DeterministicBus, MessageLog, ThreadedBus
from .database import DatabaseAgent, TupleStore
from .diagnosis import DiagnosisAgent
from .distribution import ALARM_LOG_NAME, OUTBOX_NAMES, DistributionAgent, JsonLines

logger = logging.getLogger(__name__)

STORE_NAME = "tuples.csv"
MESSAGE_LOG_NAME = "messages.jsonl"


@dataclass
class RunSummary:
    records: int = 0
    timestamps: int = 0
    tuples_stored: int = 0
    incomplete_tuples: int = 0
    alarms: dict = field(default_factory=lambda: {k: 0 for k in ALARM_KINDS})
    alerts: dict = field(default_factory=lambda: {m: 0 for m in MEDIA})
    undelivered: int = 0
    failures: int = 0
    messages: int = 0
    aborted: bool = False

    @property
    def clean(self) -> bool:
        return self.failures == 0 and not self.aborted

    def lines(self) -> list[str]:
        out = [f"records={self.records}", f"timestamps={self.timestamps}",
               f"tuples_stored={self.tuples_stored}",
               f"incomplete_tuples={self.incomplete_tuples}"]
        out += [f"alarms.{k}={v}" for k, v in self.alarms.items()]
        out += [f"alerts.{m}={v}" for m, v in self.alerts.items()]
        out += [f"undelivered={self.undelivered}", f"failures={self.failures}",
                f"messages={self.messages}"]
        return out


class Society:
    """Diagnosis agents for every channel plus the alarm, database and
    distribution agents, registered in that order on one bus."""

    def __init__(self, config: Config, out_dir, models: Optional[LoadedModels] = None,
                 store: Optional[TupleStore] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        models = models if models is not None else load_models(config)
        self.log = MessageLog(self.out_dir / MESSAGE_LOG_NAME) if config.message_log else None
        bus_cls = DeterministicBus if config.mode == "det" else ThreadedBus
        self.bus = bus_cls(self.log)
        self.diagnosis = {}
        for ch in CHANNELS:
            self.diagnosis[ch] = self.bus.register(DiagnosisAgent(
                ch, models.imv.get(ch), models.mve.get(ch), config.bins[ch],
                config.trend_epsilon, config.trend_window, config.malfunction_k))
        self.alarm = self.bus.register(AlarmAgent(config.thresholds, models.ica,
                                                  config.assembly_timeout))
        self.store = store or TupleStore(self.out_dir / STORE_NAME)
        self.database = self.bus.register(DatabaseAgent(self.store))
        outboxes = {m: JsonLines(self.out_dir / OUTBOX_NAMES[m]) for m in MEDIA}
        self.distribution = self.bus.register(DistributionAgent(
            config.profiles, outboxes, JsonLines(self.out_dir / ALARM_LOG_NAME)))
        self._closed = False

    def run(self, records: Sequence[StationLogRecord], mode: str = "batch") -> RunSummary:
        try:
            rs = replay(records, self.bus, mode)
            if not rs.aborted:
                self.bus.send_all(self.alarm.flush())
                self.bus.run_until_idle()
        finally:
            self.close()
        return self.summary(records, rs)

    def summary(self, records, rs=None) -> RunSummary:
        s = RunSummary(records=len(records), timestamps=len({r.at for r in records}))
        s.tuples_stored = self.store.rows
        s.incomplete_tuples = self.alarm.incomplete
        s.alarms = dict(self.alarm.alarms_raised)
        s.alerts = dict(self.distribution.alerts_by_medium)
        s.undelivered = self.distribution.undelivered
        s.failures = self.bus.failures
        s.messages = self.bus.sent
        s.aborted = bool(rs is not None and rs.aborted)
        return s

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.bus.close()
        if self.log is not None:
            self.log.close()


def run_pipeline(config: Config, records: Sequence[StationLogRecord], out_dir=None,
                 models: Optional[LoadedModels] = None) -> RunSummary:
    society = Society(config, out_dir if out_dir is not None else config.out_dir, models)
    return society.run(records)
