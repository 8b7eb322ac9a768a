"""Server-side aggregation rules and their loss-compensated (TRA) variants.

All reductions sort updates by ``client_id`` first, so every aggregator is
invariant to the order updates arrive in and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ClientDataset, DivergenceError, ModelSpec, loss_and_grad


@dataclass
class ClientUpdate:
    client_id: int
    params: np.ndarray
    n_samples: int
    local_loss: float
    sufficient: bool = True
    nominal_r: float = 0.0
    realized_drop_fraction: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.local_loss):
            raise ValueError(f"client {self.client_id}: non-finite local loss")
        if not 0.0 <= self.nominal_r < 1.0:
            raise ValueError(f"client {self.client_id}: nominal r must lie in [0, 1)")
        if self.sufficient and self.realized_drop_fraction != 0.0:
            raise ValueError(f"client {self.client_id}: sufficient clients cannot lose data")


def _sorted(updates):
    if not updates:
        raise ValueError("no client updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dims = {u.params.shape for u in ordered}
    if len(dims) != 1:
        raise ValueError(f"updates disagree on parameter shape: {sorted(dims)}")
    return ordered


def _mean(vectors: list[np.ndarray]) -> np.ndarray:
    total = np.zeros_like(vectors[0])
    for v in vectors:
        total += v
    return total / len(vectors)


def fedavg_aggregate(updates: list[ClientUpdate]) -> np.ndarray:
    """Unweighted elementwise mean of the uploaded models."""
    return _mean([u.params for u in _sorted(updates)])


def tra_compensate(update: ClientUpdate, mode: str = "nominal") -> np.ndarray | None:
    """Scale an insufficient client's zero-filled upload by ``1 / (1 - r)``.

    ``mode='nominal'`` uses the client's configured loss ratio;
    ``mode='realized'`` uses the fraction actually lost in this upload.
    Returns None when a realized-mode upload lost everything, meaning the
    update carries no information and should be left out.
    """
    if update.sufficient:
        return update.params
    if mode == "nominal":
        r = update.nominal_r
    elif mode == "realized":
        r = update.realized_drop_fraction
        if r >= 1.0:
            return None
    else:
        raise ValueError(f"unknown compensation mode {mode!r}")
    return update.params / (1.0 - r)


def _compensated(updates, mode):
    out = []
    for u in updates:
        p = tra_compensate(u, mode)
        if p is not None:
            out.append((u, p))
    if not out:
        raise ValueError("every update was lost in transit")
    return out


def tra_fedavg_aggregate(updates: list[ClientUpdate], mode: str = "nominal", as_printed: bool = False) -> np.ndarray:
    """Loss-compensated mean ``(sum W_i + sum W_hat_j / (1 - r_j)) / (n + m)``.

    ``as_printed=True`` instead evaluates the uncorrected two-term form
    ``mean(W_i) + sum(W_hat_j) / (m (1 - r))``, whose expectation is twice the
    client mean when both groups are present.  It exists for fidelity runs only.
    """
    ordered = _sorted(updates)
    if not as_printed:
        return _mean([p for _, p in _compensated(ordered, mode)])
    good = [u.params for u in ordered if u.sufficient]
    lossy = [u for u in ordered if not u.sufficient]
    bad = [p for _, p in _compensated(lossy, mode)] if lossy else []
    agg = np.zeros_like(ordered[0].params)
    if good:
        agg += _mean(good)
    if bad:
        agg += _mean(bad)
    return agg


def qffl_step(global_params: np.ndarray, updates: list[ClientUpdate], q: float, lipschitz: float) -> np.ndarray:
    """q-FedAvg server update.

    With ``dw_k = L (w - w_k)``, ``delta_k = F_k**q dw_k`` and
    ``h_k = q F_k**(q-1) |dw_k|**2 + L F_k**q`` the new model is
    ``w - sum(delta_k) / sum(h_k)``.  ``F_k`` is each client's loss at ``w``.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    if lipschitz <= 0:
        raise ValueError("Lipschitz constant L must be positive")
    ordered = _sorted(updates)
    num = np.zeros_like(global_params)
    den = 0.0
    for u in ordered:
        dw = lipschitz * (global_params - u.params)
        fq = u.local_loss ** q
        num += fq * dw
        # q * F**(q-1) is 0 when q == 0, even at F == 0
        slope = q * u.local_loss ** (q - 1) if q > 0 else 0.0
        den += slope * float(dw @ dw) + lipschitz * fq
    if den == 0.0:
        raise ZeroDivisionError("q-FedAvg normaliser is zero: every client loss is zero")
    return global_params - num / den


def tra_qffl_step(global_params, updates, q, lipschitz, mode: str = "nominal") -> np.ndarray:
    """q-FedAvg on uploads whose zero-filled models were compensated first."""
    comp = [
        u if u.sufficient else ClientUpdate(u.client_id, p, u.n_samples, u.local_loss, u.sufficient,
                                            u.nominal_r, u.realized_drop_fraction)
        for u, p in _compensated(_sorted(updates), mode)
    ]
    return qffl_step(global_params, comp, q, lipschitz)


@dataclass(frozen=True)
class PFedMeHyper:
    lam: float = 15.0
    inner_steps: int = 5
    local_rounds: int = 20
    personal_lr: float = 0.01
    local_lr: float = 0.005
    batch_size: int = 20
    beta: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.inner_steps < 1:
            raise ValueError("K (inner steps) must be >= 1")
        if self.local_rounds < 1:
            raise ValueError("local rounds must be >= 1")
        if self.personal_lr < 0 or self.local_lr < 0:
            raise ValueError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.beta <= 2:
            raise ValueError("beta must lie in (0, 2]")


def pfedme_local(
    global_params: np.ndarray,
    data: ClientDataset,
    hyper: PFedMeHyper,
    rng: np.random.Generator,
    spec: ModelSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """pFedMe client: returns (local model w_i, personalized model theta_i).

    Each local round draws one mini-batch, approximately solves
    ``min_theta f(theta) + lam/2 |theta - w_i|**2`` with K gradient steps from
    ``theta = w_i``, then moves ``w_i`` towards ``theta``.
    """
    w = global_params.copy()
    theta = w
    n = data.n_train
    for _ in range(hyper.local_rounds):
        idx = rng.choice(n, size=min(hyper.batch_size, n), replace=False)
        bx, by = data.train_x[idx], data.train_y[idx]
        theta = w.copy()
        for _ in range(hyper.inner_steps):
            _, g = loss_and_grad(theta, spec, bx, by)
            theta -= hyper.personal_lr * (g + hyper.lam * (theta - w))
        w = w - hyper.local_lr * hyper.lam * (w - theta)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(theta))):
        raise DivergenceError("pFedMe local solve diverged; lower personal_lr or lambda")
    return w, theta


def pfedme_local_batch(
    global_params: np.ndarray,
    datasets: list[ClientDataset],
    hyper: PFedMeHyper,
    rngs: list[np.random.Generator],
    spec: ModelSpec,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """:func:`pfedme_local` for many clients at once (logistic model only).

    Draws the same mini-batches from each client's generator as the
    per-client routine and agrees with it to rounding error.
    """
    if spec.kind != "logistic":
        raise ValueError("batched pFedMe supports the logistic model only")
    bs = hyper.batch_size
    if any(d.n_train < bs for d in datasets):
        return [pfedme_local(global_params, d, hyper, r, spec) for d, r in zip(datasets, rngs)]
    C, R, f, c = len(datasets), hyper.local_rounds, spec.features, spec.classes
    xb = np.empty((R, C, bs, f))
    yb = np.empty((R, C, bs), dtype=np.int64)
    for i, (d, rng) in enumerate(zip(datasets, rngs)):
        for r in range(R):
            idx = rng.choice(d.n_train, size=bs, replace=False)
            xb[r, i] = d.train_x[idx]
            yb[r, i] = d.train_y[idx]
    w = np.tile(global_params, (C, 1))
    theta = w
    cols = np.arange(C)[:, None]
    rows = np.arange(bs)[None, :]
    for r in range(R):
        x, y = xb[r], yb[r]
        xt = x.transpose(0, 2, 1)
        theta = w.copy()
        for _ in range(hyper.inner_steps):
            tw = theta[:, : f * c].reshape(C, f, c)
            z = x @ tw + theta[:, None, f * c:]
            z -= z.max(axis=2, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=2, keepdims=True)
            p[cols, rows, y] -= 1.0
            p /= bs
            g = np.concatenate([(xt @ p).reshape(C, f * c), p.sum(axis=1)], axis=1)
            theta = theta - hyper.personal_lr * (g + hyper.lam * (theta - w))
        w = w - hyper.local_lr * hyper.lam * (w - theta)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(theta))):
        raise DivergenceError("pFedMe local solve diverged; lower personal_lr or lambda")
    return [(w[i].copy(), theta[i].copy()) for i in range(C)]


def pfedme_server_step(global_params: np.ndarray, updates: list[ClientUpdate], beta: float,
                       tra: bool = False, mode: str = "nominal") -> np.ndarray:
    """``(1 - beta) w + beta * mean(w_i)``, compensating lossy uploads under TRA."""
    if not 0 < beta <= 2:
        raise ValueError("beta must lie in (0, 2]")
    avg = tra_fedavg_aggregate(updates, mode) if tra else fedavg_aggregate(updates)
    if beta == 1.0:
        return avg
    return (1.0 - beta) * global_params + beta * avg
