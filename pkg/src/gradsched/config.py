"""Experiment configuration: schema, defaults, parsing and echo.

Configs arrive as JSON files or plain dicts and parse into frozen
dataclasses. Parsing is strict: unknown keys anywhere are hard errors, and
every range violation names the offending field. ``to_dict`` emits a
canonical dict such that parse(to_dict(cfg)) == cfg.
"""

import json
import os
from dataclasses import dataclass

from .engine import SpeedModel
from .optim import Hyperparams
from .schedulers import SVRG_FAMILIES, parse_policy

OUTPUT_ROOT_ENV = "GRADSCHED_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid or unparseable experiment configuration."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | idx
    num_classes: int = 10
    per_class: int = 500
    test_per_class: int = 100
    input_dim: int = 20
    separation: float = 3.0
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    policy: str
    num_learners: int
    seed: int
    hyperparams: Hyperparams
    dataset: DatasetConfig
    speed_model: SpeedModel
    model_kind: str = "softmax_regression"
    hidden_dim: int = 0
    noniid_fraction: float = 1.0
    epochs: int | None = None
    outer_loops: int | None = None
    inner_loops: int | None = None
    svrg_uniform_average: bool = False
    output_dir: str | None = None

    def to_dict(self) -> dict:
        h = self.hyperparams
        d = self.dataset
        s = self.speed_model
        out = {
            "policy": self.policy,
            "num_learners": self.num_learners,
            "seed": self.seed,
            "model_kind": self.model_kind,
            "noniid_fraction": self.noniid_fraction,
            "svrg_uniform_average": self.svrg_uniform_average,
            "output_dir": self.output_dir,
            "hyperparams": {
                "eta0": h.eta0,
                "alpha": h.alpha,
                "decay_epochs": list(h.decay_epochs),
                "decay_factor": h.decay_factor,
                "batch_size": h.batch_size,
            },
            "speed_model": {
                "kind": s.kind,
                "mean": s.mean,
                "sigma": s.sigma,
                "stragglers": list(s.stragglers),
                "slowdown": s.slowdown,
            },
        }
        if self.model_kind == "mlp1":
            out["hidden_dim"] = self.hidden_dim
        if d.kind == "synthetic":
            out["dataset"] = {
                "kind": "synthetic",
                "num_classes": d.num_classes,
                "per_class": d.per_class,
                "test_per_class": d.test_per_class,
                "input_dim": d.input_dim,
                "separation": d.separation,
            }
        else:
            out["dataset"] = {
                "kind": "idx",
                "images": d.images,
                "labels": d.labels,
                "test_images": d.test_images,
                "test_labels": d.test_labels,
            }
        family, _ = parse_policy(self.policy)
        if family in SVRG_FAMILIES:
            out["outer_loops"] = self.outer_loops
            out["inner_loops"] = self.inner_loops
        else:
            out["epochs"] = self.epochs
        return out


_TOP_KEYS = {
    "policy",
    "num_learners",
    "seed",
    "model_kind",
    "hidden_dim",
    "noniid_fraction",
    "epochs",
    "outer_loops",
    "inner_loops",
    "svrg_uniform_average",
    "output_dir",
    "hyperparams",
    "speed_model",
    "dataset",
}
_HYPER_KEYS = {"eta0", "alpha", "decay_epochs", "decay_factor", "batch_size"}
_SPEED_KEYS = {"kind", "mean", "sigma", "stragglers", "slowdown"}
_DATASET_SYNTH_KEYS = {
    "kind", "num_classes", "per_class", "test_per_class", "input_dim", "separation",
}
_DATASET_IDX_KEYS = {"kind", "images", "labels", "test_images", "test_labels"}

_DEFAULTS = {
    "policy": "gsgm",
    "num_learners": 10,
    "seed": 1,
    "model_kind": "softmax_regression",
    "hidden_dim": 0,
    "noniid_fraction": 1.0,
    "svrg_uniform_average": False,
    "output_dir": None,
}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(
            f"{where}.{unknown[0]}" if where else unknown[0],
            f"unknown key (allowed: {', '.join(sorted(allowed))})",
        )


def _typed(d, key, kinds, where, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{where}{key}", "required")
        return default
    v = d[key]
    if kinds is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if kinds is int and isinstance(v, bool):
        raise ConfigError(f"{where}{key}", f"expected int, got {v!r}")
    if not isinstance(v, kinds if isinstance(kinds, tuple) else (kinds,)):
        name = kinds.__name__ if not isinstance(kinds, tuple) else "/".join(
            k.__name__ for k in kinds
        )
        raise ConfigError(f"{where}{key}", f"expected {name}, got {v!r}")
    return v


def _parse_hyperparams(raw: dict) -> Hyperparams:
    _reject_unknown(raw, _HYPER_KEYS, "hyperparams")
    decay = raw.get("decay_epochs", ())
    if not isinstance(decay, (list, tuple)) or any(
        isinstance(e, bool) or not isinstance(e, int) for e in decay
    ):
        raise ConfigError("hyperparams.decay_epochs", "expected a list of ints")
    try:
        return Hyperparams(
            eta0=_typed(raw, "eta0", float, "hyperparams.", default=0.01),
            alpha=_typed(raw, "alpha", float, "hyperparams.", default=0.9),
            decay_epochs=tuple(decay),
            decay_factor=_typed(raw, "decay_factor", float, "hyperparams.", default=0.5),
            batch_size=_typed(raw, "batch_size", int, "hyperparams.", default=100),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError("hyperparams", str(e)) from None


def _parse_speed(raw: dict) -> SpeedModel:
    _reject_unknown(raw, _SPEED_KEYS, "speed_model")
    stragglers = raw.get("stragglers", ())
    if not isinstance(stragglers, (list, tuple)) or any(
        isinstance(e, bool) or not isinstance(e, int) for e in stragglers
    ):
        raise ConfigError("speed_model.stragglers", "expected a list of learner ids")
    try:
        return SpeedModel(
            kind=_typed(raw, "kind", str, "speed_model.", default="lognormal"),
            mean=_typed(raw, "mean", float, "speed_model.", default=1.0),
            sigma=_typed(raw, "sigma", float, "speed_model.", default=0.5),
            stragglers=tuple(stragglers),
            slowdown=_typed(raw, "slowdown", float, "speed_model.", default=10.0),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError("speed_model", str(e)) from None


def _parse_dataset(raw: dict) -> DatasetConfig:
    kind = _typed(raw, "kind", str, "dataset.", default="synthetic")
    if kind == "synthetic":
        _reject_unknown(raw, _DATASET_SYNTH_KEYS, "dataset")
        cfg = DatasetConfig(
            kind="synthetic",
            num_classes=_typed(raw, "num_classes", int, "dataset.", default=10),
            per_class=_typed(raw, "per_class", int, "dataset.", default=500),
            test_per_class=_typed(raw, "test_per_class", int, "dataset.", default=100),
            input_dim=_typed(raw, "input_dim", int, "dataset.", default=20),
            separation=_typed(raw, "separation", float, "dataset.", default=3.0),
        )
        for fieldname in ("num_classes", "per_class", "test_per_class", "input_dim"):
            if getattr(cfg, fieldname) < (2 if fieldname == "num_classes" else 1):
                raise ConfigError(f"dataset.{fieldname}", "value too small")
        if cfg.separation < 0:
            raise ConfigError("dataset.separation", "must be >= 0")
        return cfg
    if kind == "idx":
        _reject_unknown(raw, _DATASET_IDX_KEYS, "dataset")
        return DatasetConfig(
            kind="idx",
            images=_typed(raw, "images", str, "dataset.", required=True),
            labels=_typed(raw, "labels", str, "dataset.", required=True),
            test_images=_typed(raw, "test_images", str, "dataset.", required=True),
            test_labels=_typed(raw, "test_labels", str, "dataset.", required=True),
        )
    raise ConfigError("dataset.kind", f"expected 'synthetic' or 'idx', got {kind!r}")


def _resolve_output_dir(path):
    if path is None:
        return None
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def parse_config(source=None, overrides: dict | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON file path or a dict.

    ``overrides`` is a flat dict applied on top of the file values; nested
    fields use dotted keys (e.g. "hyperparams.eta0"). Every unknown key,
    type error or range violation raises ConfigError naming the field.
    """
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = json.loads(json.dumps(source))  # deep copy, ensures JSON-compatible
    else:
        try:
            with open(source) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {source}") from None
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON in {source}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a JSON object")

    for key, value in (overrides or {}).items():
        parts = key.split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path collides with a scalar")
        node[parts[-1]] = value

    _reject_unknown(raw, _TOP_KEYS, "")

    policy = _typed(raw, "policy", str, "", default=_DEFAULTS["policy"])
    try:
        family, _ = parse_policy(policy)
    except ValueError as e:
        raise ConfigError("policy", str(e)) from None

    num_learners = _typed(raw, "num_learners", int, "", default=_DEFAULTS["num_learners"])
    if num_learners < 1:
        raise ConfigError("num_learners", f"must be >= 1, got {num_learners}")
    seed = _typed(raw, "seed", int, "", default=_DEFAULTS["seed"])
    if seed < 0:
        raise ConfigError("seed", f"must be >= 0, got {seed}")

    model_kind = _typed(raw, "model_kind", str, "", default=_DEFAULTS["model_kind"])
    if model_kind not in ("softmax_regression", "mlp1"):
        raise ConfigError(
            "model_kind", f"expected 'softmax_regression' or 'mlp1', got {model_kind!r}"
        )
    hidden_dim = _typed(raw, "hidden_dim", int, "", default=_DEFAULTS["hidden_dim"])
    if model_kind == "mlp1" and hidden_dim < 1:
        raise ConfigError("hidden_dim", "mlp1 requires hidden_dim >= 1")
    if model_kind == "softmax_regression" and hidden_dim != 0:
        raise ConfigError("hidden_dim", "softmax_regression takes no hidden layer")

    noniid = _typed(raw, "noniid_fraction", float, "", default=_DEFAULTS["noniid_fraction"])
    if not 0.0 <= noniid <= 1.0:
        raise ConfigError("noniid_fraction", f"must lie in [0, 1], got {noniid}")

    epochs = _typed(raw, "epochs", int, "")
    outer_loops = _typed(raw, "outer_loops", int, "")
    inner_loops = _typed(raw, "inner_loops", int, "")
    if family in SVRG_FAMILIES:
        if epochs is not None:
            raise ConfigError("epochs", f"policy {policy} counts outer/inner loops")
        outer_loops = 20 if outer_loops is None else outer_loops
        inner_loops = 5 if inner_loops is None else inner_loops
        if outer_loops < 1:
            raise ConfigError("outer_loops", f"must be >= 1, got {outer_loops}")
        if inner_loops < 1:
            raise ConfigError("inner_loops", f"must be >= 1, got {inner_loops}")
    else:
        if outer_loops is not None or inner_loops is not None:
            raise ConfigError(
                "outer_loops" if outer_loops is not None else "inner_loops",
                f"policy {policy} counts plain epochs",
            )
        epochs = 40 if epochs is None else epochs
        if epochs < 1:
            raise ConfigError("epochs", f"must be >= 1, got {epochs}")

    uniform = raw.get("svrg_uniform_average", _DEFAULTS["svrg_uniform_average"])
    if not isinstance(uniform, bool):
        raise ConfigError("svrg_uniform_average", f"expected bool, got {uniform!r}")

    hyper_raw = raw.get("hyperparams", {})
    if not isinstance(hyper_raw, dict):
        raise ConfigError("hyperparams", "expected an object")
    hyperparams = _parse_hyperparams(hyper_raw)

    speed_raw = raw.get("speed_model", {})
    if not isinstance(speed_raw, dict):
        raise ConfigError("speed_model", "expected an object")
    speed = _parse_speed(speed_raw)
    bad = [k for k in speed.stragglers if not 1 <= k <= num_learners]
    if bad:
        raise ConfigError(
            "speed_model.stragglers", f"ids {bad} outside 1..{num_learners}"
        )

    data_raw = raw.get("dataset", {})
    if not isinstance(data_raw, dict):
        raise ConfigError("dataset", "expected an object")
    dataset = _parse_dataset(data_raw)
    if dataset.kind == "synthetic":
        n = dataset.num_classes * dataset.per_class
        if num_learners > n:
            raise ConfigError("num_learners", f"more learners than examples ({n})")

    output_dir = _typed(raw, "output_dir", str, "", default=_DEFAULTS["output_dir"])

    return ExperimentConfig(
        policy=policy,
        num_learners=num_learners,
        seed=seed,
        hyperparams=hyperparams,
        dataset=dataset,
        speed_model=speed,
        model_kind=model_kind,
        hidden_dim=hidden_dim,
        noniid_fraction=noniid,
        epochs=epochs,
        outer_loops=outer_loops,
        inner_loops=inner_loops,
        svrg_uniform_average=uniform,
        output_dir=_resolve_output_dir(output_dir),
    )
