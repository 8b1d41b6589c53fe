"""Run configuration: a single JSON document with a versioned ``schema`` key.

Every section is optional and defaults to the values used in the reference
experiments (temperature 1.5, min-p 0.1, top-k 50, 4098 tokens, population
16, best-of-3, three generations, seven annealing steps with patience 3).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .annetron import AnnetronConfig
from .core import SamplingParams, TemperatureSchedule
from .errors import ConfigError, ValidationError
from .genetron import GenetronConfig
from .reward import ANCHORED, RewardSpec

SCHEMA = "memetron.run/1"
ALGORITHMS = ("genetron", "annetron", "memetron", "best_of_n_baseline")
BACKENDS = ("simulated", "http")
REWARD_BUILTINS = ("target_match", "token_band", "rugged", "length")


@dataclass(frozen=True)
class SimulatedBackendConfig:
    alphabet: str = "01"
    length: int = 8
    edit_rate: float = 0.2
    max_fusion_edits: int = 1


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str = "http://localhost:8000"
    model: str = "default"
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0
    max_in_flight: int = 8
    supports_min_p: bool = False
    supports_top_k: bool = False


@dataclass(frozen=True)
class RewardConfig:
    kind: str = "scalar"
    builtin: Optional[str] = "target_match"
    params: dict = field(default_factory=dict)
    endpoint: Optional[dict] = None
    alpha: Optional[float] = None
    higher_is_better: bool = True

    def spec(self) -> RewardSpec:
        return RewardSpec(
            kind=self.kind,
            alpha=self.alpha,
            anchor_policy="fixed_initial" if self.kind == ANCHORED else "none",
            higher_is_better=self.higher_is_better,
        )


@dataclass(frozen=True)
class BudgetConfig:
    max_model_calls: int = 100_000
    max_reward_evals: int = 100_000


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "memetron"
    backend: str = "simulated"
    simulated: SimulatedBackendConfig = field(default_factory=SimulatedBackendConfig)
    http: HttpBackendConfig = field(default_factory=HttpBackendConfig)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    genetron: GenetronConfig = field(default_factory=GenetronConfig)
    annetron: AnnetronConfig = field(default_factory=AnnetronConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    seed: Optional[int] = None
    output_dir: Optional[str] = None
    templates: dict = field(default_factory=dict)
    sentinels: Optional[bool] = None

    @property
    def use_sentinels(self) -> bool:
        return self.backend == "simulated" if self.sentinels is None else self.sentinels

    def to_dict(self, include_output_dir: bool = True) -> dict[str, Any]:
        d = asdict(self)
        d["schema"] = SCHEMA
        if not include_output_dir:
            d.pop("output_dir")
        return d


def _build(cls, data: Any, path: str, **overrides):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    kwargs = {**data, **overrides}
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        raise ConfigError(path, str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    data = dict(data)
    schema = data.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError("schema", f"unsupported schema {schema!r}, expected {SCHEMA!r}")
    algorithm = data.get("algorithm", "memetron")
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {ALGORITHMS}")
    backend = data.get("backend", "simulated")
    if backend not in BACKENDS:
        raise ConfigError("backend", f"must be one of {BACKENDS}")
    seed = data.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64):
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if backend == "simulated" and seed is None:
        raise ConfigError("seed", "required for the simulated backend")

    annetron_data = dict(data.get("annetron") or {})
    schedule = _build(TemperatureSchedule, annetron_data.pop("schedule", None), "annetron.schedule")
    reward = _build(RewardConfig, data.get("reward"), "reward")
    try:
        reward.spec()
    except ValidationError as exc:
        raise ConfigError("reward", str(exc)) from exc
    if reward.builtin is None and reward.endpoint is None:
        raise ConfigError("reward", "needs either a builtin or an endpoint")
    if reward.builtin is not None and reward.builtin not in REWARD_BUILTINS:
        raise ConfigError("reward.builtin", f"must be one of {REWARD_BUILTINS}")
    templates = data.get("templates") or {}
    if not isinstance(templates, dict) or set(templates) - {"fusion", "refine"}:
        raise ConfigError("templates", "expected an object with optional 'fusion' and 'refine' paths")

    config = RunConfig(
        algorithm=algorithm,
        backend=backend,
        simulated=_build(SimulatedBackendConfig, data.get("simulated"), "simulated"),
        http=_build(HttpBackendConfig, data.get("http"), "http"),
        sampling=_build(SamplingParams, data.get("sampling"), "sampling"),
        reward=reward,
        genetron=_build(GenetronConfig, data.get("genetron"), "genetron"),
        annetron=_build(AnnetronConfig, annetron_data, "annetron", schedule=schedule),
        budget=_build(BudgetConfig, data.get("budget"), "budget"),
        seed=seed,
        output_dir=data.get("output_dir"),
        templates=templates,
        sentinels=data.get("sentinels"),
    )
    unknown = set(data) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if config.budget.max_model_calls < 1 or config.budget.max_reward_evals < 1:
        raise ConfigError("budget", "limits must be positive")
    if reward.kind == ANCHORED and config.algorithm in ("annetron", "memetron") and config.annetron.scoring != "anchored":
        raise ConfigError("annetron.scoring", "a pairwise reward requires anchored scoring")
    return config


def load_config(path: Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    return parse_config(data)
