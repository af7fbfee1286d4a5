"""Run configuration: a flat key/value text file plus per-flag overrides.

Secrets (remote provider tokens) come from the environment only and are
never written to config files or reports.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InputError


@dataclass
class RunConfig:
    graph: str = ""
    index: str = ""
    model: str = ""
    provider: str = "count-oracle"  # mock | count-oracle | remote
    endpoint: str = ""
    l: int = 0  # 0 = use the query diameter
    f_dim: int = 16
    d_dim: int = 8
    seed: int = 0
    jobs: int = 1
    token_budget: int = 1200
    completion_cap: int = 10000
    assembly_cap: int = 100000
    fallback_cap: int = 50
    substructure_cap: int = 32
    out: str = ""

    def validate(self) -> None:
        for name in (
            "token_budget",
            "completion_cap",
            "assembly_cap",
            "fallback_cap",
            "substructure_cap",
            "f_dim",
            "d_dim",
            "jobs",
        ):
            if getattr(self, name) <= 0:
                raise InputError(f"config value {name} must be positive")
        if self.l < 0:
            raise InputError("l must be >= 0 (0 means query diameter)")
        if self.provider not in ("mock", "count-oracle", "remote"):
            raise InputError(f"unknown provider {self.provider!r}")
        if self.provider == "remote" and not self.endpoint:
            raise InputError("remote provider requires endpoint=")


_INT_FIELDS = {
    f.name for f in fields(RunConfig) if f.type in ("int",) or f.type is int
}


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{p}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not hasattr(cfg, key):
            raise InputError(f"{p}:{lineno}: unknown config key {key!r}")
        if key in _INT_FIELDS:
            try:
                setattr(cfg, key, int(value))
            except ValueError:
                raise InputError(f"{p}:{lineno}: {key} needs an integer") from None
        else:
            setattr(cfg, key, value)
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise InputError(f"unknown config override {key!r}")
        setattr(cfg, key, value)
    return cfg
