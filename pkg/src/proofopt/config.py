"""Run configuration: backend wiring, schedule, seeding, and workdir."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendConfig
from .errors import ConfigError
from .records import Measure

_SCHEDULE_ENTRY = re.compile(r"^(\d+)x(\d+)(?:@([0-9.]+))?$")


def parse_schedule(spec: str, default_temperature: float = 1.0) -> list[tuple[int, float]]:
    """Expand a schedule string like '64x6,1024x2@1.5' into (k, temperature)
    pairs, one per iteration."""
    schedule = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        m = _SCHEDULE_ENTRY.match(part)
        if not m:
            raise ConfigError(f"bad schedule entry {part!r}, expected KxN or KxN@T")
        k, reps = int(m.group(1)), int(m.group(2))
        temperature = float(m.group(3)) if m.group(3) else default_temperature
        if k < 1 or reps < 1:
            raise ConfigError(f"schedule entry {part!r} needs positive k and count")
        schedule.extend((k, temperature) for _ in range(reps))
    if not schedule:
        raise ConfigError("empty schedule")
    return schedule


@dataclass
class RunConfig:
    backends: dict[str, BackendConfig] = field(default_factory=dict)
    schedule: str = "4x2"
    measure: Measure = Measure.TOKEN_LENGTH
    parallel_workers: int = 1
    seed: int = 0
    workdir: Path | None = None
    repair: bool = False
    repair_budget: int = 4

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(raw)

    @classmethod
    def from_json(cls, raw: dict) -> "RunConfig":
        backends = {
            name: BackendConfig.from_json(obj)
            for name, obj in raw.get("backends", {}).items()
        }
        try:
            measure = Measure(raw.get("measure", "length"))
        except ValueError as exc:
            raise ConfigError(f"unknown measure {raw.get('measure')!r}") from exc
        cfg = cls(
            backends=backends,
            schedule=raw.get("schedule", "4x2"),
            measure=measure,
            parallel_workers=int(raw.get("parallel_workers", 1)),
            seed=int(raw.get("seed", 0)),
            workdir=Path(raw["workdir"]) if raw.get("workdir") else None,
            repair=bool(raw.get("repair", False)),
            repair_budget=int(raw.get("repair_budget", 4)),
        )
        if cfg.parallel_workers < 1:
            raise ConfigError("parallel_workers must be at least 1")
        return cfg

    def backend(self, name: str) -> BackendConfig:
        if name not in self.backends:
            raise ConfigError(f"no backend named {name!r} in config")
        return self.backends[name]

    def apply_seed(self) -> None:
        """Push the run seed into mock backends that did not set their own."""
        for cfg in self.backends.values():
            if cfg.kind == "mock" and "seed" not in cfg.options:
                cfg.options["seed"] = self.seed
