"""Run configuration: strict TOML schema with explicit, recorded defaults."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

DATASET_KINDS = ("spirals", "blobs", "xor-grid", "csv")
LAYER_TYPES = ("dense", "relu", "gelu", "blackbox")
SM_INIT = ("oracle", "sketch")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


REQUIRED = object()


@dataclass
class DatasetConfig:
    kind: str = REQUIRED
    n: int = 1000
    noise: float = 0.1
    test_fraction: float = 0.25
    classes: int = 2
    seed: int = 0
    path: str = ""


@dataclass
class LayerSpec:
    type: str = REQUIRED
    d_out: int = 0
    d_inp: int = 0
    bias: bool = True
    kind: str = ""
    a: float = 0.0
    r_c: float = 0.0
    gain: float = 0.0


@dataclass
class TrainConfig:
    eta: float = REQUIRED
    eta_bb: float = REQUIRED
    m_bb: int = REQUIRED
    m_sm: int = REQUIRED
    rank: int = REQUIRED
    batch_size: int = REQUIRED
    steps: int = REQUIRED
    seed: int = 0
    mu: float = 1e-2
    share_directions: bool = True
    sm_init: str = "oracle"
    oversample: int = 5
    m_probe: int = 1000
    eval_every: int = 0
    measure_sm_error: bool = False
    psi_updates: bool = True
    log_wall_time: bool = False


@dataclass
class RunConfig:
    name: str
    dataset: DatasetConfig
    layers: list
    train: TrainConfig
    out_dir: str = ""
    loss: str = "softmax_xent"

    def to_dict(self):
        d = dataclasses.asdict(self)
        net = {"loss": d.pop("loss"), "layers": [_trim_layer(l) for l in d.pop("layers")]}
        d["network"] = net
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _trim_layer(layer):
    keep = {"type": layer["type"]}
    if layer["type"] == "dense":
        keep.update(d_out=layer["d_out"], bias=layer["bias"])
    elif layer["type"] == "blackbox":
        keep.update({k: layer[k] for k in ("kind", "d_inp", "d_out", "gain")})
        if layer["kind"] == "mrr":
            keep.update(a=layer["a"], r_c=layer["r_c"])
    return keep


_TYPES = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}


def _fill(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
    values = {}
    for name, f in known.items():
        if name not in raw:
            if f.default is REQUIRED:
                raise ConfigError(f"{path}.{name}", "missing required field")
            values[name] = f.default
            continue
        val = raw[name]
        if f.type == "list":
            if not (isinstance(val, list) and val and all(isinstance(v, int) and v >= 1 for v in val)):
                raise ConfigError(f"{path}.{name}", "expected a non-empty list of positive integers")
            values[name] = list(val)
            continue
        ftype = {"int": int, "float": float, "bool": bool, "str": str}[f.type]
        ok = isinstance(val, _TYPES[ftype]) and not (ftype is not bool and isinstance(val, bool))
        if not ok:
            raise ConfigError(f"{path}.{name}", f"expected {f.type}, got {type(val).__name__}")
        values[name] = ftype(val)
    return cls(**values)


def _validate_train(t: TrainConfig):
    for name in ("eta", "mu"):
        if not getattr(t, name) > 0:
            raise ConfigError(f"train.{name}", "must be > 0")
    if t.eta_bb < 0:
        raise ConfigError("train.eta_bb", "must be >= 0")
    for name in ("m_bb", "m_sm", "rank", "batch_size", "steps", "m_probe"):
        if getattr(t, name) < 1:
            raise ConfigError(f"train.{name}", "must be >= 1")
    if t.oversample < 0 or t.eval_every < 0:
        raise ConfigError("train", "oversample and eval_every must be >= 0")
    if t.sm_init not in SM_INIT:
        raise ConfigError("train.sm_init", f"must be one of {SM_INIT}")


def _validate_layers(layers):
    if not layers:
        raise ConfigError("network.layers", "at least one layer required")
    for i, l in enumerate(layers):
        p = f"network.layers[{i}]"
        if l.type not in LAYER_TYPES:
            raise ConfigError(f"{p}.type", f"must be one of {LAYER_TYPES}")
        if l.type in ("dense", "blackbox") and l.d_out < 1:
            raise ConfigError(f"{p}.d_out", "missing or non-positive")
        if l.type == "blackbox":
            if not l.kind:
                raise ConfigError(f"{p}.kind", "missing required field")
            if l.kind == "mrr":
                l.a = l.a or 0.8
                l.r_c = l.r_c or 0.9
            elif l.a or l.r_c:
                raise ConfigError(p, "constants a / r_c only apply to kind 'mrr'")
    if layers[-1].type != "dense":
        raise ConfigError("network.layers", "last layer must be dense (logits)")


def parse_config(raw: dict) -> RunConfig:
    raw = dict(raw)
    allowed = {"name", "out_dir", "dataset", "network", "train"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(key, "unknown key")
    if "name" not in raw or not isinstance(raw["name"], str):
        raise ConfigError("name", "missing required field")
    for key in ("dataset", "network", "train"):
        if key not in raw:
            raise ConfigError(key, "missing required section")
    dataset = _fill(DatasetConfig, raw["dataset"], "dataset")
    if dataset.kind not in DATASET_KINDS:
        raise ConfigError("dataset.kind", f"must be one of {DATASET_KINDS}")
    if dataset.kind == "csv" and not dataset.path:
        raise ConfigError("dataset.path", "required for kind 'csv'")
    if not 0 < dataset.test_fraction < 1:
        raise ConfigError("dataset.test_fraction", "must lie in (0, 1)")
    net = raw["network"]
    if not isinstance(net, dict):
        raise ConfigError("network", "expected a table")
    for key in net:
        if key not in ("layers", "loss"):
            raise ConfigError(f"network.{key}", "unknown key")
    loss = net.get("loss", "softmax_xent")
    if loss != "softmax_xent":
        raise ConfigError("network.loss", "only 'softmax_xent' is supported")
    if not isinstance(net.get("layers"), list):
        raise ConfigError("network.layers", "missing required list")
    layers = [_fill(LayerSpec, l, f"network.layers[{i}]") for i, l in enumerate(net["layers"])]
    _validate_layers(layers)
    train = _fill(TrainConfig, raw["train"], "train")
    _validate_train(train)
    out_dir = raw.get("out_dir", "")
    if not isinstance(out_dir, str):
        raise ConfigError("out_dir", "expected a string")
    return RunConfig(raw["name"], dataset, layers, train, out_dir, loss)


@dataclass
class ProbeConfig:
    seed: int = 0
    d_inp: int = 8
    d_out: int = 8
    mu: float = 1e-2
    rank: int = 4
    trials: int = 20
    m_bb_grid: list = field(default_factory=lambda: [100, 1000, 10000])
    m_sm_grid: list = field(default_factory=lambda: [100, 1000, 10000])


def _read_toml(path):
    text = Path(path).read_text()
    if Path(path).suffix == ".json":
        # resolved copies written into run directories
        try:
            return json.loads(text), text
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}: {exc}") from exc
    try:
        return tomllib.loads(text), text
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"{path}: {exc}") from exc


def load_probe_config(path) -> ProbeConfig:
    raw, _ = _read_toml(path)
    for key in raw:
        if key != "probe":
            raise ConfigError(key, "unknown key (probe configs hold a single [probe] table)")
    cfg = _fill(ProbeConfig, raw.get("probe", {}), "probe")
    if cfg.mu <= 0 or min(cfg.d_inp, cfg.d_out, cfg.trials) < 1:
        raise ConfigError("probe", "mu, dimensions and trials must be positive")
    if not 1 <= cfg.rank <= cfg.d_out:
        raise ConfigError("probe.rank", "must lie in [1, d_out]")
    return cfg


def load_config(path) -> tuple[RunConfig, str]:
    """Parse a TOML (or resolved JSON) run config; returns the config and the verbatim file text."""
    raw, text = _read_toml(path)
    return parse_config(raw), text


def replace_train(cfg: RunConfig, **changes) -> RunConfig:
    train = dataclasses.replace(cfg.train, **changes)
    _validate_train(train)
    return dataclasses.replace(cfg, train=train, layers=[dataclasses.replace(l) for l in cfg.layers])
