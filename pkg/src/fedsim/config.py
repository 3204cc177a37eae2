"""Declarative experiment configs: a flat ``key = value`` text format.

One file describes one run completely -- model, population, sampling,
optimizers, noise, cost constants, seed -- so (config bytes) -> (metrics
bytes) is a pure function. Unknown keys are rejected rather than
ignored: a typo in an experiment grid must fail loudly, not silently run
the default.
"""

import re
import types
from dataclasses import dataclass, fields

from .cost import CostConstants, default_constants
from .data import CountDistribution, SamplingPolicy
from .models import ModelSpec, param_count
from .optim import FvnConfig, LrSchedule

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "serialize_config"]


class ConfigError(ValueError):
    pass


_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass
class ExperimentConfig:
    # identity / mode
    experiment_id: str = "experiment"
    mode: str = "federated"  # federated | centralized
    seed: int = 0
    # model
    model_kind: str = "logistic"
    input_dim: int = 8
    hidden_dim: int = 0
    num_classes: int = 4
    # population
    num_clients: int = 200
    count_dist: str = "lognormal"  # lognormal | fixed
    count_mu: float = 3.0
    count_sigma: float = 0.8
    count_fixed: int = 20
    cluster_spread: float = 0.3
    center_scale: float = 1.0
    # round structure
    clients_per_round: int = 128
    rounds: int = 100
    local_epochs: int = 1
    batch_size: int = 8
    data_limit: int | None = None
    sampling_mode: str = "non_iid"  # non_iid | iid
    shard_size: int | None = None
    aggregate_weighting: str = "effective"  # effective | full
    # optimizers
    client_lr: float = 0.008
    server_opt: str = "adam"  # sgd | adam
    server_lr: float = 0.001
    server_schedule: str = "constant"  # constant | linear_rampup | rampup_then_expdecay
    rampup_rounds: int = 0
    decay_rate: float = 1.0
    decay_every: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # weight noise
    fvn_enabled: bool = False
    fvn_schedule: str = "constant"  # constant | linear_ramp
    fvn_std: float = 0.0
    fvn_std_max: float = 0.0
    fvn_ramp_rounds: int = 1
    fvn_transient: bool = True
    # cost constants (model_bytes=None derives from the parameter count)
    model_bytes: float | None = None
    payload_bytes: float | None = None
    peak_mem_bytes: float | None = None
    alpha: float = 1.0
    # evaluation
    eval_every: int = 10
    eval_fraction: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def fail(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if not self.experiment_id or not _ID_RE.match(self.experiment_id):
            fail("experiment_id", f"must be non-empty and filesystem-safe, got {self.experiment_id!r}")
        _expect(self.mode, ("federated", "centralized"), "mode")
        if self.seed < 0:
            fail("seed", f"must be >= 0, got {self.seed}")
        _expect(self.model_kind, ("linear", "logistic", "mlp"), "model_kind")
        _expect(self.count_dist, ("lognormal", "fixed"), "count_dist")
        _expect(self.sampling_mode, ("non_iid", "iid"), "sampling_mode")
        _expect(self.aggregate_weighting, ("effective", "full"), "aggregate_weighting")
        _expect(self.server_opt, ("sgd", "adam"), "server_opt")
        _expect(self.server_schedule,
                ("constant", "linear_rampup", "rampup_then_expdecay"), "server_schedule")
        _expect(self.fvn_schedule, ("constant", "linear_ramp"), "fvn_schedule")
        if self.num_clients < 1:
            fail("num_clients", f"must be >= 1, got {self.num_clients}")
        if self.clients_per_round > self.num_clients:
            fail("clients_per_round",
                 f"clients_per_round={self.clients_per_round} exceeds num_clients={self.num_clients}")
        if self.rounds < 0:
            fail("rounds", f"must be >= 0, got {self.rounds}")
        if self.local_epochs < 1:
            fail("local_epochs", f"must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            fail("batch_size", f"must be >= 1, got {self.batch_size}")
        if self.data_limit is not None and self.data_limit < 1:
            fail("data_limit", f"must be >= 1 or none, got {self.data_limit}")
        if self.sampling_mode == "iid" and self.shard_size is None:
            fail("shard_size", "required when sampling_mode = iid")
        if self.shard_size is not None and self.shard_size < 1:
            fail("shard_size", f"must be >= 1, got {self.shard_size}")
        if self.client_lr < 0:
            fail("client_lr", f"must be >= 0, got {self.client_lr}")
        if self.eval_every < 1:
            fail("eval_every", f"must be >= 1, got {self.eval_every}")
        if not 0.0 < self.eval_fraction < 1.0:
            fail("eval_fraction", f"must be in (0, 1), got {self.eval_fraction}")
        # delegate the rest to the owning types
        try:
            self.spec()
            self.count_distribution()
            self.server_lr_schedule()
            self.fvn()
            self.cost_constants()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    # -- derived objects -------------------------------------------------

    def spec(self) -> ModelSpec:
        return ModelSpec(self.model_kind, self.input_dim, self.hidden_dim, self.num_classes)

    def count_distribution(self) -> CountDistribution:
        if self.count_dist == "fixed":
            return CountDistribution.fixed(self.count_fixed)
        return CountDistribution.lognormal(self.count_mu, self.count_sigma)

    def sampling_policy(self) -> SamplingPolicy:
        return SamplingPolicy(self.sampling_mode, self.data_limit, self.clients_per_round)

    def server_lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.server_schedule, self.server_lr, self.rampup_rounds,
                          self.decay_rate, self.decay_every)

    def fvn(self) -> FvnConfig:
        return FvnConfig(self.fvn_enabled, self.fvn_schedule, self.fvn_std,
                         self.fvn_std_max, self.fvn_ramp_rounds, self.fvn_transient)

    def cost_constants(self) -> CostConstants:
        size = self.model_bytes
        if size is None:
            size = 8.0 * param_count(self.spec())
        base = default_constants(size)
        return CostConstants(
            payload_bytes=base.payload_bytes if self.payload_bytes is None else self.payload_bytes,
            peak_mem_bytes=base.peak_mem_bytes if self.peak_mem_bytes is None else self.peak_mem_bytes,
            alpha=self.alpha,
        )


def _expect(value, allowed, name):
    if value not in allowed:
        raise ConfigError(f"{name}: must be one of {', '.join(allowed)}; got {value!r}")


_BOOL_WORDS = {"true": True, "false": False}


def _parse_value(name: str, text: str, target_type, optional: bool):
    if optional and text == "none":
        return None
    if target_type is bool:
        if text not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected true or false, got {text!r}")
        return _BOOL_WORDS[text]
    if target_type is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {text!r}") from None
    if target_type is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {text!r}") from None
    return text


def _field_types() -> dict[str, tuple[type, bool]]:
    """name -> (scalar type, is-optional) for every config field."""
    out = {}
    for f in fields(ExperimentConfig):
        t = f.type
        optional = False
        if isinstance(t, str):
            optional = "None" in t
            base = t.replace("| None", "").strip(" |")
            t = {"str": str, "int": int, "float": float, "bool": bool}[base]
        elif isinstance(t, types.UnionType):
            args = [a for a in t.__args__ if a is not type(None)]
            optional = len(args) != len(t.__args__)
            t = args[0]
        out[f.name] = (t, optional)
    return out


_FIELDS = None


def _schema() -> dict[str, tuple[type, bool]]:
    global _FIELDS
    if _FIELDS is None:
        _FIELDS = _field_types()
    return _FIELDS


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat key = value document; '#' starts a comment.

    Every key must be a known config field; values are typed per field,
    with the literal ``none`` for the optional ones.
    """
    schema = _schema()
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in schema:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        if not val:
            raise ConfigError(f"line {line_no}: key {key!r} has no value")
        typ, optional = schema[key]
        values[key] = _parse_value(key, val, typ, optional)
    return ExperimentConfig(**values)


def parse_config_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(config, f.name)
        if v is None:
            text = "none"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
