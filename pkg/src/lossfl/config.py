"""Experiment and grid configuration, loaded from TOML with strict key checking.

A run file holds the :class:`ExperimentConfig` keys at top level plus the
nested tables ``[model]``, ``[train]``, ``[qfedavg]``, ``[pfedme]``,
``[network]`` and ``[data]``.  A matrix file holds ``name``, ``seed``, a
``[base]`` table with run keys and a ``[grid]`` table of axes.  Unknown keys
anywhere are an error.
"""

from __future__ import annotations

import dataclasses
import itertools
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .aggregation import PFedMeHyper
from .datagen import DATASET_PRESETS, SyntheticConfig, dataset_slug
from .model import ModelSpec, TrainHyper
from .rng import derive_seed

ALGORITHMS = ("fedavg", "qfedavg", "pfedme")
GRID_AXES = ("variant", "dataset", "eligible_ratio", "loss_ratio")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class QFedAvgHyper:
    q: float = 1.0
    lipschitz: float | None = None  # None -> 1 / learning_rate

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.lipschitz is not None and self.lipschitz <= 0:
            raise ValueError("lipschitz must be positive")


@dataclass(frozen=True)
class NetworkConfig:
    packet_size: int = 256
    compensation: str = "nominal"
    printed_normalisation: bool = False
    upload_speed_sufficient: float | None = None
    upload_speed_insufficient: float | None = None
    bytes_per_param: int = 4

    def __post_init__(self):
        if self.packet_size < 1:
            raise ValueError("packet_size must be >= 1")
        if self.compensation not in ("nominal", "realized"):
            raise ValueError("compensation must be 'nominal' or 'realized'")
        if (self.upload_speed_sufficient is None) != (self.upload_speed_insufficient is None):
            raise ValueError("give both upload speeds or neither")
        if self.bytes_per_param < 1:
            raise ValueError("bytes_per_param must be >= 1")

    @property
    def speeds(self):
        if self.upload_speed_sufficient is None:
            return None
        return (self.upload_speed_sufficient, self.upload_speed_insufficient)


@dataclass(frozen=True)
class DataOverrides:
    alpha: float | None = None
    beta: float | None = None
    iid: bool | None = None
    num_clients: int = 100
    train_fraction: float = 0.8
    min_samples: int = 50
    lognormal_mean: float = 4.0
    lognormal_sigma: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "fedavg"
    tra: bool = False
    dataset: str = "(0.5,0.5)"
    rounds: int = 200
    clients_per_round: int = 10
    eligible_ratio: float = 1.0
    loss_ratio: float = 0.1
    seed: int = 0
    data_seed: int | None = None
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainHyper = field(default_factory=TrainHyper)
    qfedavg: QFedAvgHyper = field(default_factory=QFedAvgHyper)
    pfedme: PFedMeHyper = field(default_factory=PFedMeHyper)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    data: DataOverrides = field(default_factory=DataOverrides)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.dataset not in DATASET_PRESETS and self.dataset != "custom":
            raise ValueError(f"dataset must be 'custom' or one of {sorted(DATASET_PRESETS)}")
        if self.dataset == "custom" and (self.data.alpha is None or self.data.beta is None):
            raise ValueError("custom dataset needs data.alpha and data.beta")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.clients_per_round < 1:
            raise ValueError("clients_per_round must be >= 1")
        if self.clients_per_round > self.data.num_clients:
            raise ValueError("clients_per_round exceeds num_clients")
        if not 0.0 < self.eligible_ratio <= 1.0:
            raise ValueError("eligible_ratio must lie in (0, 1]")
        if not 0.0 <= self.loss_ratio < 1.0:
            raise ValueError("loss_ratio must lie in [0, 1)")
        if not self.tra and self.eligible_ratio * self.data.num_clients < 1:
            raise ValueError("threshold selection needs at least one eligible client")

    @property
    def variant(self) -> str:
        return f"tra-{self.algorithm}" if self.tra else self.algorithm

    @property
    def lipschitz(self) -> float:
        if self.qfedavg.lipschitz is not None:
            return self.qfedavg.lipschitz
        return 1.0 / self.train.learning_rate

    def synthetic_config(self) -> SyntheticConfig:
        d = self.data
        if self.dataset == "custom":
            alpha, beta, iid = d.alpha, d.beta, bool(d.iid)
        else:
            alpha, beta, iid = DATASET_PRESETS[self.dataset]
            alpha = alpha if d.alpha is None else d.alpha
            beta = beta if d.beta is None else d.beta
            iid = iid if d.iid is None else d.iid
        return SyntheticConfig(
            alpha=alpha, beta=beta, iid=iid, num_clients=d.num_clients,
            features=self.model.features, classes=self.model.classes,
            seed=self.seed if self.data_seed is None else self.data_seed,
            train_fraction=d.train_fraction, min_samples=d.min_samples,
            lognormal_mean=d.lognormal_mean, lognormal_sigma=d.lognormal_sigma,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_type(value, hint, where):
    origin = typing.get_origin(hint)
    if origin is typing.Union or type(hint).__name__ == "UnionType":
        args = typing.get_args(hint)
        if value is None and type(None) in args:
            return value
        hint = next(a for a in args if a is not type(None))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def build(cls, mapping: dict, where: str = ""):
    """Construct dataclass ``cls`` from a nested dict, rejecting unknown keys."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where or 'config'}: expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in mapping.items():
        path = f"{where}.{key}" if where else key
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = build(hint, value, path)
        else:
            kwargs[key] = _check_type(value, hint, path)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _read_toml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_experiment(path) -> ExperimentConfig:
    return build(ExperimentConfig, _read_toml(path))


def parse_variant(name: str) -> tuple[str, bool]:
    tra = name.startswith("tra-")
    algo = name[4:] if tra else name
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown variant {name!r}")
    return algo, tra


def _fmt_ratio(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class Cell:
    key: str
    config: ExperimentConfig


@dataclass(frozen=True)
class GridConfig:
    name: str
    seed: int
    base: dict
    grid: dict

    def cells(self) -> list[Cell]:
        """Cartesian product of the grid axes, in file order.

        Each cell trains with a seed derived from the master seed and the
        cell key; datasets and network profiles use the master seed so every
        cell sees the same clients.
        """
        axes = [(a, self.grid[a]) for a in GRID_AXES if a in self.grid]
        out = []
        for combo in itertools.product(*(vals for _, vals in axes)):
            over = dict(zip((a for a, _ in axes), combo))
            cfg_dict = dict(self.base)
            if "variant" in over:
                algo, tra = parse_variant(over.pop("variant"))
                cfg_dict.update(algorithm=algo, tra=tra)
            cfg_dict.update(over)
            cfg_dict.pop("seed", None)
            cfg_dict.pop("data_seed", None)
            base_cfg = build(ExperimentConfig, cfg_dict, "base")
            key = cell_key(base_cfg)
            out.append(Cell(key, base_cfg.replace(seed=derive_seed(self.seed, key), data_seed=self.seed)))
        keys = [c.key for c in out]
        if len(set(keys)) != len(keys):
            raise ConfigError("grid produces duplicate cells")
        return out


def cell_key(cfg: ExperimentConfig) -> str:
    ds = dataset_slug(cfg.dataset) if cfg.dataset != "custom" else f"a{cfg.data.alpha:g}-b{cfg.data.beta:g}"
    return f"{cfg.variant}_{ds}_e{_fmt_ratio(cfg.eligible_ratio)}_r{_fmt_ratio(cfg.loss_ratio)}"


def build_grid(raw: dict, where: str = "grid config") -> GridConfig:
    unknown = sorted(set(raw) - {"name", "seed", "base", "grid"})
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    name = raw.get("name", "matrix")
    seed = raw.get("seed", 0)
    if not isinstance(name, str) or isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"{where}: name must be a string and seed an integer")
    base = raw.get("base", {})
    grid = raw.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError(f"{where}: missing [grid] table")
    bad = sorted(set(grid) - set(GRID_AXES))
    if bad:
        raise ConfigError(f"{where}: unknown grid axis {', '.join(bad)}; allowed {GRID_AXES}")
    for axis, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{where}: grid axis {axis!r} must be a non-empty list")
    g = GridConfig(name, seed, base, grid)
    try:
        g.cells()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return g


def load_grid(path) -> GridConfig:
    return build_grid(_read_toml(path), str(path))
