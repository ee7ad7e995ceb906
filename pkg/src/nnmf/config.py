"""Run configuration: flat `key = value` text with sections.

Every hyperparameter of a run is explicit here so the config snapshot
archived next to each output fully determines the run.  Parsing is
strict: unknown sections or keys and malformed values raise ConfigError
naming the offending key.  ``dumps`` emits a canonical form (fixed
section and key order) and ``loads(dumps(c)) == c`` holds exactly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace

from .baselines import init_biasedmf, init_ntn, init_pmf
from .data import SplitSpec
from .errors import ConfigError
from .model import InitSpec, NnmfModel, default_layer_dims, init_model
from .optimizer import LambdaGrid, RmspropConfig, TrainSchedule

MODEL_KINDS = ("nnmf", "pmf", "biasedmf", "ntn")


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text):
    t = text.strip()
    return tuple(float(x) for x in t.split(",")) if t else ()


def _parse_int_list(text):
    t = text.strip()
    return tuple(int(x) for x in t.split(",")) if t else ()


def _parse_opt_float(text):
    t = text.strip()
    return float(t) if t else None


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return ""
    return str(value)


# (section, key, field name, parser, default)
_SCHEMA = (
    ("data", "path", "data_path", str, ""),
    ("data", "format", "data_format", str, "canonical"),
    ("data", "square", "square", _parse_bool, False),
    ("model", "kind", "model_kind", str, "nnmf"),
    ("model", "d", "D", int, 10),
    ("model", "dprime", "Dprime", int, 60),
    ("model", "k", "K", int, 1),
    ("model", "layer_dims", "layer_dims", _parse_int_list, ()),
    ("model", "hidden_layers", "hidden_layers", int, 3),
    ("model", "hidden_units", "hidden_units", int, 50),
    ("model", "h", "H", int, 50),
    ("model", "output_sigmoid", "output_sigmoid", _parse_bool, False),
    ("model", "target_offset", "target_offset", float, 0.0),
    ("model", "target_scale", "target_scale", float, 1.0),
    ("model", "feature_std", "feature_std", float, 0.1),
    ("split", "test_fraction", "test_fraction", float, 0.1),
    ("split", "validation_fraction", "validation_fraction", float, 0.1),
    ("split", "n_repeats", "n_repeats", int, 5),
    ("split", "seed", "split_seed", int, 20240501),
    ("train", "lambda", "fixed_lambda", _parse_opt_float, None),
    ("train", "lambda_grid", "lambda_grid", _parse_float_list,
     (0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0)),
    ("train", "learning_rate", "learning_rate", float, 0.001),
    ("train", "rho", "rho", float, 0.9),
    ("train", "epsilon", "epsilon", float, 1e-8),
    ("train", "max_epochs", "max_epochs", int, 5000),
    ("train", "patience", "patience", int, 50),
    ("train", "min_delta", "min_delta", float, 1e-5),
    ("train", "network_steps", "network_steps", int, 1),
    ("train", "feature_steps", "feature_steps", int, 1),
    ("train", "seed", "train_seed", int, 7041776),
    ("train", "backend", "backend", str, ""),
    ("eval", "clamp", "clamp", _parse_bool, False),
    ("run", "out_dir", "out_dir", str, "runs/default"),
    ("run", "jobs", "jobs", int, 1),
)

@dataclass(frozen=True)
class RunConfig:
    data_path: str = ""
    data_format: str = "canonical"
    square: bool = False
    model_kind: str = "nnmf"
    D: int = 10
    Dprime: int = 60
    K: int = 1
    layer_dims: tuple = ()
    hidden_layers: int = 3
    hidden_units: int = 50
    H: int = 50
    output_sigmoid: bool = False
    target_offset: float = 0.0
    target_scale: float = 1.0
    feature_std: float = 0.1
    test_fraction: float = 0.1
    validation_fraction: float = 0.1
    n_repeats: int = 5
    split_seed: int = 20240501
    fixed_lambda: object = None
    lambda_grid: tuple = (0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0)
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8
    max_epochs: int = 5000
    patience: int = 50
    min_delta: float = 1e-5
    network_steps: int = 1
    feature_steps: int = 1
    train_seed: int = 7041776
    backend: str = ""
    clamp: bool = False
    out_dir: str = "runs/default"
    jobs: int = 1

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"[model] kind must be one of {MODEL_KINDS}")

    # -- serialization ----------------------------------------------------

    @classmethod
    def loads(cls, text) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        known = {(s, k): (name, parse) for s, k, name, parse, _ in _SCHEMA}
        values = {}
        for section in parser.sections():
            for key in parser[section]:
                if (section, key) not in known:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                name, parse = known[(section, key)]
                raw = parser[section][key]
                try:
                    values[name] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"invalid value for [{section}] {key}: {exc}"
                    ) from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None

    def dumps(self) -> str:
        out = io.StringIO()
        current = None
        for section, key, name, _parse, _default in _SCHEMA:
            if section != current:
                if current is not None:
                    out.write("\n")
                out.write(f"[{section}]\n")
                current = section
            out.write(f"{key} = {_fmt(getattr(self, name))}\n")
        return out.getvalue()

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def with_seed(self, seed: int) -> "RunConfig":
        """Override both the split and the training/init seed."""
        return self.replace(split_seed=seed, train_seed=seed)

    # -- derived pieces ----------------------------------------------------

    def require_data(self):
        if not self.data_path:
            raise ConfigError("missing config key [data] path")
        if self.data_format not in ("movielens", "edgelist", "canonical"):
            raise ConfigError(f"invalid [data] format {self.data_format!r}")

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            test_fraction=self.test_fraction,
            validation_fraction=self.validation_fraction,
            n_repeats=self.n_repeats,
            seed=self.split_seed,
        )

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            network_steps=self.network_steps,
            feature_steps=self.feature_steps,
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_delta=self.min_delta,
        )

    def opt(self) -> RmspropConfig:
        return RmspropConfig(
            learning_rate=self.learning_rate, rho=self.rho, epsilon=self.epsilon
        )

    def grid(self) -> LambdaGrid:
        return LambdaGrid(self.lambda_grid)

    def resolved_layer_dims(self):
        if self.layer_dims:
            dims = list(self.layer_dims)
            if dims[0] != 2 * self.D + self.Dprime:
                raise ConfigError(
                    f"[model] layer_dims[0] = {dims[0]} but 2*d + dprime = "
                    f"{2 * self.D + self.Dprime}"
                )
            if dims[-1] != 1:
                raise ConfigError("[model] layer_dims must end with 1")
            return dims
        return default_layer_dims(self.D, self.Dprime, self.hidden_layers,
                                  self.hidden_units)

    def build_model(self, n_rows, n_cols, seed, train_values=None):
        """Fresh model of the configured kind for an n_rows x n_cols array."""
        spec = InitSpec(feature_std=self.feature_std, seed=seed)
        kind = self.model_kind
        if kind == "nnmf":
            net, state = init_model(
                (n_rows, n_cols, self.D, self.Dprime, self.K),
                self.resolved_layer_dims(),
                spec,
            )
            return NnmfModel(net, state, backend=self.backend or None)
        if kind == "pmf":
            return init_pmf(n_rows, n_cols, self.D, spec)
        if kind == "biasedmf":
            bias = float(train_values.mean()) if train_values is not None else 0.0
            return init_biasedmf(n_rows, n_cols, self.D, spec, global_bias=bias)
        if kind == "ntn":
            return init_ntn(
                n_rows, n_cols, self.D, self.H, spec,
                output_sigmoid=self.output_sigmoid,
                target_offset=self.target_offset,
                target_scale=self.target_scale,
            )
        raise ConfigError(f"unknown model kind {kind!r}")

    def expect_meta(self, n_rows, n_cols):
        """Checkpoint dimension expectations for this config and dataset."""
        kind = self.model_kind
        if kind == "nnmf":
            return {"N": n_rows, "M": n_cols, "D": self.D, "Dprime": self.Dprime,
                    "K": self.K, "layer_dims": self.resolved_layer_dims()}
        if kind in ("pmf", "biasedmf"):
            return {"N": n_rows, "M": n_cols, "D": self.D}
        return {"N": n_rows, "M": n_cols, "D": self.D, "H": self.H}
