"""Run configuration: a JSON-serialisable record of everything a run depends on."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

ENV_SEED = "RESTMUT_SEED"
ENV_CONFIG = "RESTMUT_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    strategy: str = "S0"
    n: int = 2
    operators: list[str] = field(default_factory=list)  # empty: the four default operators
    payloads: dict[str, str] = field(default_factory=dict)  # kind -> dictionary file
    quiescence_ms: int = 5000
    session_delay_s: float = 60.0
    sut_id: str = "AccMan"
    sut_url: str | None = None
    setup_url: str | None = None
    mock_port: str | int = "auto"
    logs: list[str] = field(default_factory=list)
    testcases: str | None = None  # directory of IOTS JSON files
    session_key: str = "from"
    out_dir: str = "restmut-out"
    junit: bool = False
    dry_run: bool = False
    stages: list[str] = field(default_factory=lambda: ["ingest", "mutate", "concretize", "run", "report"])

    STAGES = ("ingest", "mutate", "concretize", "run", "report")

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if str(self.strategy).upper() not in ("S0", "S1", "S2"):
            raise ConfigError(f"strategy must be S0, S1 or S2, got {self.strategy!r}")
        self.strategy = str(self.strategy).upper()
        if int(self.n) < 1:
            raise ConfigError("n must be a positive integer")
        if self.quiescence_ms <= 0:
            raise ConfigError("quiescence_ms must be positive")
        if self.mock_port != "auto" and not (isinstance(self.mock_port, int) and 0 <= self.mock_port < 65536):
            raise ConfigError(f"mock_port must be 'auto' or a port number, got {self.mock_port!r}")
        unknown = [s for s in self.stages if s not in self.STAGES]
        if unknown:
            raise ConfigError(f"unknown stages: {unknown}")
        if self.session_key != "from" and not self.session_key.startswith("cookie:"):
            raise ConfigError("session_key must be 'from' or 'cookie:<name>'")

    @property
    def port(self) -> int:
        return 0 if self.mock_port == "auto" else int(self.mock_port)

    def wants(self, stage: str) -> bool:
        return stage in self.stages

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "RunConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {extra}")
        try:
            return cls(**dict(doc))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(doc)

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **overrides: Any) -> "RunConfig":
        """Config file named by ``RESTMUT_CONFIG`` (if any), then ``RESTMUT_SEED``, then ``overrides``."""
        env = os.environ if env is None else env
        doc: dict[str, Any] = {}
        if env.get(ENV_CONFIG):
            doc = cls.load(env[ENV_CONFIG]).to_json()
        if env.get(ENV_SEED):
            try:
                doc["seed"] = int(env[ENV_SEED])
            except ValueError as exc:
                raise ConfigError(f"{ENV_SEED} must be an integer") from exc
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_json(doc)
