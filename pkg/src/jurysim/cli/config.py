"""Campaign configuration files.

A config is one YAML (or JSON) mapping. Scalar fields describe the base
scenario; ``sweep`` maps any sweepable field to a list of values and the
campaign runs the cartesian product. Times are given in milliseconds.

    name: phases-by-n
    j: 22
    blame_kind: justified
    time_params: auto
    sweep:
      n: [1000, 2000, 5000]
    seeds: {master_seed: 7, run_count: 30}
"""

from __future__ import annotations

import itertools
import warnings
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..protocol import Behavior, ms
from ..simnet import BlameKind, Latencies, Scenario, WireSizes

SWEEPABLE = (
    "n",
    "j",
    "quorum_q",
    "blame_kind",
    "byzantine_behavior",
    "adversary_fraction",
    "t_min_ms",
    "t_max_ms",
    "t_ele_ms",
    "wait_mean_ms",
)


class ConfigError(ValueError):
    """Unreadable or invalid config; the message names the failing field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TimeParams(_Strict):
    t_min_ms: Optional[float] = None
    t_max_ms: Optional[float] = None
    t_ele_ms: Optional[float] = None


class SeedSpec(_Strict):
    master_seed: int = Field(0, ge=0, lt=2**64)
    run_count: int = Field(30, ge=1)


class LatencyOverrides(_Strict):
    attestation_generation_ms: Optional[float] = None
    attestation_validation_ms: Optional[float] = None
    certificate_generation_ms: Optional[float] = None
    bft_step_ms: Optional[float] = None
    link_ms: Optional[float] = None
    blame_relay_ms: Optional[float] = None
    certificate_relay_ms: Optional[float] = None
    decision_relay_ms: Optional[float] = None

    def apply(self) -> Latencies:
        given = {k[:-3]: ms(v) for k, v in self.model_dump().items() if v is not None}
        return Latencies(**given)


class SizeOverrides(_Strict):
    blame: Optional[int] = None
    certificate: Optional[int] = None
    decision: Optional[int] = None
    bft: Optional[int] = None
    attestation_request: Optional[int] = None
    attestation_response: Optional[int] = None

    def apply(self) -> WireSizes:
        return WireSizes(**{k: v for k, v in self.model_dump().items() if v is not None})


class ScenarioConfig(_Strict):
    name: str = "campaign"
    n: int = Field(1000, ge=2)
    j: int = Field(22, ge=1)
    quorum_q: Union[int, Literal["default"]] = "default"
    blame_kind: BlameKind = BlameKind.JUSTIFIED
    byzantine_behavior: Behavior = Behavior.SILENT
    adversary_fraction: float = Field(0.0, ge=0.0, le=1.0)
    adversaries: Optional[Tuple[int, ...]] = None
    time_params: Union[Literal["auto"], TimeParams] = "auto"
    wait_mean_ms: Optional[float] = None
    view_timeout_ms: Optional[float] = None
    election_backend: Literal["numba", "python"] = "numba"
    seeds: Union[SeedSpec, List[int]] = Field(default_factory=SeedSpec)
    latencies: LatencyOverrides = Field(default_factory=LatencyOverrides)
    sizes: SizeOverrides = Field(default_factory=SizeOverrides)
    sweep: Dict[str, List[Any]] = Field(default_factory=dict)

    @field_validator("sweep")
    @classmethod
    def _known_sweep_keys(cls, value):
        for key, values in value.items():
            if key not in SWEEPABLE:
                raise ValueError(f"cannot sweep {key!r}; sweepable fields: {', '.join(SWEEPABLE)}")
            if not values:
                raise ValueError(f"sweep over {key!r} is empty")
        return value

    @field_validator("seeds")
    @classmethod
    def _seed_list(cls, value):
        if isinstance(value, list):
            if not value:
                raise ValueError("seed list is empty")
            if any(not 0 <= s < 2**64 for s in value):
                raise ValueError("seeds must lie in [0, 2**64)")
        return value

    @model_validator(mode="after")
    def _points_valid(self):
        for point in self.points():
            self.scenario(point, seed=0)
        return self

    # -- seeds -------------------------------------------------------------

    @property
    def master_seed(self) -> Optional[int]:
        return None if isinstance(self.seeds, list) else self.seeds.master_seed

    def seed_list(self) -> List[int]:
        if isinstance(self.seeds, list):
            return list(self.seeds)
        state = np.random.SeedSequence(self.seeds.master_seed).generate_state(self.seeds.run_count, dtype=np.uint64)
        return [int(s) for s in state]

    # -- parameter points --------------------------------------------------

    def points(self) -> List[Dict[str, Any]]:
        """Sweep values of every parameter point, in sweep order."""
        keys = list(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def resolved(self, point: Dict[str, Any]) -> Dict[str, Any]:
        """Every sweepable field's value at ``point``."""
        times = TimeParams() if self.time_params == "auto" else self.time_params
        base = {
            "n": self.n,
            "j": self.j,
            "quorum_q": self.quorum_q,
            "blame_kind": self.blame_kind,
            "byzantine_behavior": self.byzantine_behavior,
            "adversary_fraction": self.adversary_fraction,
            "t_min_ms": times.t_min_ms,
            "t_max_ms": times.t_max_ms,
            "t_ele_ms": times.t_ele_ms,
            "wait_mean_ms": self.wait_mean_ms,
        }
        base.update(point)
        return base

    def scenario(self, point: Dict[str, Any], seed: int) -> Scenario:
        where = ", ".join(f"{k}={v}" for k, v in point.items()) or "base"
        try:
            v = self.resolved(point)
            q = v["quorum_q"]

            def us(x):
                return None if x is None else ms(float(x))

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return Scenario(
                    n=int(v["n"]),
                    j=int(v["j"]),
                    quorum_q=None if q == "default" else int(q),
                    blame_kind=BlameKind(v["blame_kind"]),
                    t_min=us(v["t_min_ms"]),
                    t_max=us(v["t_max_ms"]),
                    t_ele=us(v["t_ele_ms"]),
                    wait_mean=us(v["wait_mean_ms"]),
                    adversary_fraction=float(v["adversary_fraction"]),
                    adversaries=self.adversaries,
                    byzantine_behavior=Behavior(v["byzantine_behavior"]),
                    view_timeout=us(self.view_timeout_ms),
                    seed=int(seed),
                    latencies=self.latencies.apply(),
                    sizes=self.sizes.apply(),
                    election_backend=self.election_backend,
                )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"sweep point ({where}): {exc}") from None


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: Any, overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    data = dict(data)
    for key, value in (overrides or {}).items():
        if key == "run_count":
            seeds = data.get("seeds") or {}
            if isinstance(seeds, list):
                raise ConfigError("--seeds cannot be combined with an explicit seed list")
            data["seeds"] = {**seeds, "run_count": value}
        elif key == "master_seed":
            seeds = data.get("seeds") or {}
            if isinstance(seeds, list):
                raise ConfigError("--master-seed cannot be combined with an explicit seed list")
            data["seeds"] = {**seeds, "master_seed": value}
        else:
            data[key] = value
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(data, overrides)
