"""Synthetic(alpha, beta) federated datasets.

Each client k draws a model shift ``u_k ~ N(0, alpha)`` and a data shift
``B_k ~ N(0, beta)``; its labelling model has entries ``N(u_k, 1)`` and its
feature mean entries ``N(B_k, 1)``.  Features are Gaussian with diagonal
covariance ``j**-1.2`` and labels are the argmax of the client's linear model.
In i.i.d. mode every client shares one labelling model and a zero feature
mean.  Client sizes follow ``min_samples + round(lognormal(4, 2))``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ClientDataset
from .rng import Purpose, stream

# name -> (alpha, beta, iid)
DATASET_PRESETS = {
    "iid": (0.0, 0.0, True),
    "(0,0)": (0.0, 0.0, False),
    "(0.5,0.5)": (0.5, 0.5, False),
    "(1,1)": (1.0, 1.0, False),
    "(2,2)": (2.0, 2.0, False),
}


def dataset_slug(name: str) -> str:
    """File-name-safe token for a dataset preset, e.g. ``(1,1)`` -> ``s1-1``."""
    if name == "iid":
        return "iid"
    a, b = name.strip("()").split(",")
    return f"s{a.strip()}-{b.strip()}"


@dataclass(frozen=True)
class SyntheticConfig:
    alpha: float = 0.0
    beta: float = 0.0
    iid: bool = False
    num_clients: int = 100
    features: int = 60
    classes: int = 10
    seed: int = 0
    train_fraction: float = 0.8
    min_samples: int = 50
    lognormal_mean: float = 4.0
    lognormal_sigma: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.num_clients < 1 or self.min_samples < 2:
            raise ValueError("need num_clients >= 1 and min_samples >= 2")
        if self.features < 1 or self.classes < 2:
            raise ValueError("need features >= 1 and classes >= 2")

    @classmethod
    def preset(cls, name: str, **overrides) -> "SyntheticConfig":
        try:
            alpha, beta, iid = DATASET_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown dataset preset {name!r}; choose from {sorted(DATASET_PRESETS)}") from None
        return cls(alpha=alpha, beta=beta, iid=iid, **overrides)


@dataclass
class ClientGenerator:
    weights: np.ndarray  # features x classes
    bias: np.ndarray
    mean: np.ndarray
    n_samples: int


def client_generators(cfg: SyntheticConfig) -> list[ClientGenerator]:
    """Per-client labelling models, feature means and sizes.

    Shared draws use a fixed schedule of standard normals scaled by alpha and
    beta, so datasets for different (alpha, beta) under one seed differ only
    in the degree of heterogeneity.
    """
    rng = stream(cfg.seed, Purpose.DATA)
    K, d, c = cfg.num_clients, cfg.features, cfg.classes
    sizes = cfg.min_samples + np.rint(rng.lognormal(cfg.lognormal_mean, cfg.lognormal_sigma, K)).astype(np.int64)
    u = cfg.alpha * rng.standard_normal(K)
    B = cfg.beta * rng.standard_normal(K)
    shared_w = rng.standard_normal((d, c))
    shared_b = rng.standard_normal(c)
    gens = []
    for k in range(K):
        z_w = rng.standard_normal((d, c))
        z_b = rng.standard_normal(c)
        z_v = rng.standard_normal(d)
        if cfg.iid:
            gens.append(ClientGenerator(shared_w, shared_b, np.zeros(d), int(sizes[k])))
        else:
            gens.append(ClientGenerator(u[k] + z_w, u[k] + z_b, B[k] + z_v, int(sizes[k])))
    return gens


def gen_synthetic(cfg: SyntheticConfig) -> list[ClientDataset]:
    gens = client_generators(cfg)
    std = np.arange(1, cfg.features + 1, dtype=float) ** -0.6  # sqrt of j**-1.2
    out = []
    for k, g in enumerate(gens):
        rng = stream(cfg.seed, Purpose.DATA, 1, k)
        x = g.mean + std * rng.standard_normal((g.n_samples, cfg.features))
        y = np.argmax(x @ g.weights + g.bias, axis=1)
        n_train = min(max(int(cfg.train_fraction * g.n_samples), 1), g.n_samples - 1)
        out.append(ClientDataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:]))
    return out


def pooled_test_set(datasets: list[ClientDataset]) -> tuple[np.ndarray, np.ndarray]:
    if not datasets:
        raise ValueError("no client datasets to pool")
    return (np.concatenate([d.test_x for d in datasets]),
            np.concatenate([d.test_y for d in datasets]))


def export_csv(datasets: list[ClientDataset], features_path: str | Path, labels_path: str | Path) -> None:
    """Write ``client_id,split,x0..`` and ``client_id,split,y`` files (rows aligned)."""
    d = datasets[0].train_x.shape[1]
    with open(features_path, "w", newline="") as fx, open(labels_path, "w", newline="") as fy:
        wx, wy = csv.writer(fx), csv.writer(fy)
        wx.writerow(["client_id", "split"] + [f"x{j}" for j in range(d)])
        wy.writerow(["client_id", "split", "y"])
        for k, ds in enumerate(datasets):
            for split, xs, ys in (("train", ds.train_x, ds.train_y), ("test", ds.test_x, ds.test_y)):
                for row, label in zip(xs, ys):
                    wx.writerow([k, split] + [repr(float(v)) for v in row])
                    wy.writerow([k, split, int(label)])
