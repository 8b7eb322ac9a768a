"""Round loop, client selection policies and the experiment / matrix runners."""

from __future__ import annotations

import enum
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregation as agg
from .config import Cell, ExperimentConfig, GridConfig
from .datagen import gen_synthetic
from .model import DivergenceError, correct_counts, init_params, local_train
from .netsim import NetworkProfile, assign_profiles, round_time, sufficiency_report, transmit
from .report import RoundRecord, emit_csv, emit_summary, fairness_stats, summarize_final
from .rng import Purpose, stream

log = logging.getLogger(__name__)


class SelectionPolicy(enum.Enum):
    THRESHOLD_BIASED = "threshold"
    TRA_FULL = "tra"


def select_clients(policy: SelectionPolicy, sufficient: list[bool], k: int, rng: np.random.Generator) -> list[int]:
    """Uniform sample without replacement of ``min(k, pool)`` client ids.

    ``sufficient`` holds the server's view of each client (its report bit).
    Threshold-biased selection draws only from sufficient clients.
    """
    if k < 1:
        raise ValueError("must select at least one client")
    if policy is SelectionPolicy.TRA_FULL:
        pool = list(range(len(sufficient)))
    else:
        pool = [i for i, ok in enumerate(sufficient) if ok]
    if not pool:
        raise ValueError("no eligible clients: threshold selection has an empty pool")
    if k >= len(pool):
        return pool
    return sorted(int(i) for i in rng.choice(pool, size=k, replace=False))


@dataclass
class ServerState:
    params: np.ndarray
    round: int
    profiles: list[NetworkProfile]
    reports: list[int] = field(default_factory=list)
    personalized: dict[int, np.ndarray] = field(default_factory=dict)
    events: list[tuple] = field(default_factory=list)

    @property
    def sufficient_group(self) -> list[bool]:
        return [bit == 1 for bit in self.reports]


class Simulation:
    """Datasets, profiles and evaluation buffers for one experiment config."""

    def __init__(self, cfg: ExperimentConfig, jobs: int = 1):
        self.cfg = cfg
        self.spec = cfg.model
        self.jobs = max(1, int(jobs))
        syn = cfg.synthetic_config()
        self.datasets = gen_synthetic(syn)
        self.num_clients = len(self.datasets)
        self.profiles = assign_profiles(
            self.num_clients, cfg.eligible_ratio, cfg.loss_ratio,
            stream(syn.seed, Purpose.PROFILE), cfg.network.speeds,
        )
        self.policy = SelectionPolicy.TRA_FULL if cfg.tra else SelectionPolicy.THRESHOLD_BIASED
        self.test_x = np.concatenate([d.test_x for d in self.datasets])
        self.test_y = np.concatenate([d.test_y for d in self.datasets])
        self.test_sizes = np.array([d.n_test for d in self.datasets])
        self.test_offsets = np.concatenate([[0], np.cumsum(self.test_sizes)])

    def init_state(self) -> ServerState:
        """Collect every client's sufficiency bit before any selection."""
        state = ServerState(init_params(self.spec, self.cfg.seed), 0, self.profiles)
        for k, p in enumerate(self.profiles):
            state.reports.append(sufficiency_report(p))
            state.events.append(("report", k))
        state.events.append(("categorize", sum(state.reports)))
        return state

    def _map(self, fn, items):
        if self.jobs == 1 or len(items) < 2:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.jobs) as ex:
            return list(ex.map(fn, items))

    def per_client_correct(self, params: np.ndarray) -> np.ndarray:
        return correct_counts(params, self.spec, self.test_x, self.test_y, self.test_offsets)

    def _upload(self, state, t, k, params, local_loss) -> agg.ClientUpdate:
        prof = self.profiles[k]
        tx = transmit(params, prof, self.cfg.network.packet_size, stream(self.cfg.seed, Purpose.NETWORK, t, k))
        return agg.ClientUpdate(
            client_id=k, params=tx.received, n_samples=self.datasets[k].n_train,
            local_loss=local_loss, sufficient=state.reports[k] == 1,
            nominal_r=prof.loss_ratio if not prof.sufficient else 0.0,
            realized_drop_fraction=0.0 if prof.sufficient else tx.drop_fraction,
        )

    def run_round(self, state: ServerState) -> tuple[ServerState, RoundRecord]:
        t = state.round
        try:
            return self._round(state, t)
        except DivergenceError as exc:
            raise DivergenceError(f"round {t + 1}: {exc}") from exc

    def _round(self, state: ServerState, t: int):
        cfg = self.cfg
        w = state.params
        rng_sel = stream(cfg.seed, Purpose.SELECT, t)
        personalized_acc = global_acc = None

        if cfg.algorithm == "pfedme":
            # every client trains, then a subset uploads
            rngs = [stream(cfg.seed, Purpose.TRAIN, t, k) for k in range(self.num_clients)]
            if self.spec.kind == "logistic":
                results = agg.pfedme_local_batch(w, self.datasets, cfg.pfedme, rngs, self.spec)
            else:
                results = self._map(lambda k: agg.pfedme_local(w, self.datasets[k], cfg.pfedme, rngs[k], self.spec),
                                    list(range(self.num_clients)))
            selected = select_clients(self.policy, state.sufficient_group, cfg.clients_per_round, rng_sel)
            state.events.append(("select", t, tuple(selected)))
            updates = [self._upload(state, t, k, results[k][0], 0.0) for k in selected]
            new_w = agg.pfedme_server_step(w, updates, cfg.pfedme.beta, tra=cfg.tra,
                                           mode=cfg.network.compensation)
            state.personalized = {k: results[k][1] for k in range(self.num_clients)}
            hits = sum(
                int(correct_counts(theta, self.spec, self.datasets[k].test_x, self.datasets[k].test_y,
                                   np.array([0, self.datasets[k].n_test]))[0])
                for k, theta in state.personalized.items()
            )
            personalized_acc = 100.0 * hits / self.test_sizes.sum()
        else:
            selected = select_clients(self.policy, state.sufficient_group, cfg.clients_per_round, rng_sel)
            state.events.append(("select", t, tuple(selected)))

            def client(k):
                return local_train(w, self.datasets[k], cfg.train,
                                   stream(cfg.seed, Purpose.TRAIN, t, k), self.spec)
            results = self._map(client, selected)
            updates = [self._upload(state, t, k, wk, fk) for k, (wk, fk) in zip(selected, results)]
            mode = cfg.network.compensation
            if cfg.algorithm == "fedavg":
                new_w = (agg.tra_fedavg_aggregate(updates, mode, cfg.network.printed_normalisation)
                         if cfg.tra else agg.fedavg_aggregate(updates))
            else:
                q, lip = cfg.qfedavg.q, cfg.lipschitz
                new_w = (agg.tra_qffl_step(w, updates, q, lip, mode) if cfg.tra
                         else agg.qffl_step(w, updates, q, lip))

        if not np.all(np.isfinite(new_w)):
            raise DivergenceError("aggregated model is non-finite")
        state.params = new_w
        state.round = t + 1
        correct = self.per_client_correct(new_w)
        per_client = 100.0 * correct / self.test_sizes
        sample_acc = 100.0 * correct.sum() / self.test_sizes.sum()
        if cfg.algorithm == "pfedme":
            global_acc = sample_acc
        sim_time = round_time([self.profiles[k] for k in selected],
                              self.spec.dim * cfg.network.bytes_per_param, cfg.tra)
        record = RoundRecord(t + 1, sample_acc, per_client, fairness_stats(per_client),
                             personalized_acc, global_acc, sim_time)
        return state, record


def run_round(state: ServerState, sim: Simulation) -> tuple[ServerState, RoundRecord]:
    return sim.run_round(state)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[RoundRecord]:
    """Run ``cfg.rounds`` rounds; one record per round (none when rounds == 0)."""
    sim = Simulation(cfg, jobs)
    state = sim.init_state()
    correct = sim.per_client_correct(state.params)
    log.debug("%s initial sample accuracy %.2f%%", cfg.variant,
              100.0 * correct.sum() / sim.test_sizes.sum())
    records = []
    for _ in range(cfg.rounds):
        state, rec = sim.run_round(state)
        records.append(rec)
    return records


def _run_cell(cell: Cell, out_dir: str) -> dict:
    cfg = cell.config
    row = {"algorithm": cfg.variant, "dataset": cfg.dataset,
           "eligible_ratio": cfg.eligible_ratio, "loss_ratio": cfg.loss_ratio}
    try:
        records = run_experiment(cfg)
        emit_csv(records, Path(out_dir) / f"{cell.key}.csv")
        if records:
            row = summarize_final(records, **row)
        else:
            row["status"] = "ok"
    except Exception as exc:  # recorded per cell, the matrix carries on
        log.debug("cell %s failed:\n%s", cell.key, traceback.format_exc())
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    return row


def run_matrix(grid: GridConfig, out_dir: str | Path, jobs: int = 1) -> Path:
    """Run every grid cell, one CSV per cell plus ``summary.csv``.

    Output bytes do not depend on ``jobs``: cells are independent and the
    summary is written in grid order after all cells finish.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = grid.cells()
    rows: list[dict] = [None] * len(cells)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            futures = {ex.submit(_run_cell, c, str(out)): i for i, c in enumerate(cells)}
            for fut, i in futures.items():
                rows[i] = fut.result()
                log.info("[%d/%d] %s %s", i + 1, len(cells), cells[i].key, rows[i]["status"])
    else:
        for i, c in enumerate(cells):
            rows[i] = _run_cell(c, str(out))
            log.info("[%d/%d] %s %s", i + 1, len(cells), c.key, rows[i]["status"])
    emit_summary(rows, out / "summary.csv")
    return out
