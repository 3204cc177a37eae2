"""Federated averaging round engine and the centralized control arm.

One round: select clients, run each client's local SGD from the current
global weights, aggregate the weight deltas (n_k-weighted), apply the
server optimizer to the aggregate, accrue cost. Client updates are pure
functions of (global weights, client data, stream keys), so the engine
may run them serially, in any order, or on a thread pool with
bit-identical results; aggregation always sums in ascending client_id
order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cost import CostConstants, CostLedger, ledger_accrue
from .data import (
    ClientDataset,
    Population,
    SamplingPolicy,
    make_iid_shards,
    sample_client_batchstream,
    select_clients,
)
from .models import Batch, ModelSpec, gradient, init_params, loss
from .optim import (
    AdamState,
    FvnConfig,
    LrSchedule,
    adam_step,
    fvn_perturb,
    fvn_std_at,
    lr_at,
)
from .rng import substream

__all__ = [
    "ClientUpdateResult",
    "RoundReport",
    "client_update",
    "aggregate",
    "aggregation_weights",
    "server_update",
    "FedAvgTrainer",
    "train_centralized",
]


@dataclass
class ClientUpdateResult:
    """What one client sends back: its delta (w_round - w_local_final),
    how much data and how many steps produced it, and its final local loss."""

    client_id: int
    delta: np.ndarray
    n_k_effective: int
    n_k_total: int
    local_steps: int
    local_loss_final: float


@dataclass
class RoundReport:
    round: int
    selected: list[int]
    aggregate_norm: float
    mean_client_loss: float
    lr_server: float
    fvn_std: float
    mu_actual: float
    cfmq_cumulative: float


def client_update(
    spec: ModelSpec,
    w_round: np.ndarray,
    client: ClientDataset,
    policy: SamplingPolicy,
    local_epochs: int,
    batch_size: int,
    client_lr: float,
    fvn_std: float,
    seed: int,
    round_index: int,
    fvn_transient: bool = True,
) -> ClientUpdateResult:
    """Local SGD over this round's batch stream; w_round is not modified.

    With noise enabled, each step computes its gradient at a perturbed
    copy of the weights; transient mode applies the update to the
    unperturbed weights, otherwise the perturbation persists.
    """
    if client_lr < 0:
        raise ValueError(f"client_lr must be >= 0, got {client_lr}")
    batches = sample_client_batchstream(
        client, policy, local_epochs, batch_size, round_index, seed
    )
    w = w_round
    for step, batch in enumerate(batches):
        if fvn_std > 0.0:
            w_used = fvn_perturb(w, fvn_std, seed, round_index, client.client_id, step)
        else:
            w_used = w
        g = gradient(spec, w_used, batch)
        base = w if fvn_transient else w_used
        w = base - client_lr * g

    # the distinct examples of the round = the first epoch's batches
    first_epoch = batches[: len(batches) // local_epochs]
    round_subset = Batch(
        np.concatenate([b.features for b in first_epoch]),
        np.concatenate([b.labels for b in first_epoch]),
    )
    return ClientUpdateResult(
        client_id=client.client_id,
        delta=w_round - w,
        n_k_effective=len(round_subset),
        n_k_total=client.n_k,
        local_steps=len(batches),
        local_loss_final=loss(spec, w, round_subset),
    )


def aggregation_weights(results: list[ClientUpdateResult], weighting: str = "effective") -> np.ndarray:
    """Normalized aggregation weights, ordered by ascending client_id."""
    if weighting not in ("effective", "full"):
        raise ValueError(f"weighting must be 'effective' or 'full', got {weighting!r}")
    ordered = sorted(results, key=lambda r: r.client_id)
    counts = np.asarray(
        [r.n_k_effective if weighting == "effective" else r.n_k_total for r in ordered],
        dtype=np.float64,
    )
    return counts / counts.sum()


def aggregate(results: list[ClientUpdateResult], weighting: str = "effective") -> np.ndarray:
    """n_k-weighted mean of client deltas, summed in ascending client_id order."""
    if not results:
        raise ValueError("cannot aggregate zero client results")
    ids = [r.client_id for r in results]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate client ids in aggregation: {sorted(ids)}")
    dim = results[0].delta.shape
    for r in results:
        if r.delta.shape != dim:
            raise ValueError(f"delta shape mismatch: {r.delta.shape} vs {dim}")
    ordered = sorted(results, key=lambda r: r.client_id)
    weights = aggregation_weights(results, weighting)
    out = np.zeros(dim)
    for w_k, r in zip(weights, ordered):
        out += w_k * r.delta
    return out


def server_update(
    w: np.ndarray,
    w_bar: np.ndarray,
    lr: float,
    adam_state: AdamState | None = None,
) -> tuple[np.ndarray, AdamState | None]:
    """Apply the server step to the aggregated delta.

    SGD mode (adam_state None): w - lr * w_bar. Adam mode: one Adam step
    with w_bar as the pseudo-gradient, at the given learning rate.
    """
    if w.shape != w_bar.shape:
        raise ValueError(f"shape mismatch: weights {w.shape} vs aggregate {w_bar.shape}")
    if adam_state is None:
        return w - lr * w_bar, None
    return adam_step(replace(adam_state, lr=lr), w, w_bar)


class FedAvgTrainer:
    """Drives rounds against a fixed population; owns the mutable state
    (weights, server optimizer moments, cost ledger)."""

    def __init__(
        self,
        spec: ModelSpec,
        population: Population,
        policy: SamplingPolicy,
        *,
        local_epochs: int,
        batch_size: int,
        client_lr: float,
        server_schedule: LrSchedule,
        constants: CostConstants,
        seed: int,
        server_opt: str = "adam",
        adam_beta1: float = 0.9,
        adam_beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        fvn: FvnConfig = FvnConfig.disabled(),
        weighting: str = "effective",
        shard_size: int | None = None,
        initial_weights: np.ndarray | None = None,
        max_workers: int | None = None,
    ):
        if server_opt not in ("sgd", "adam"):
            raise ValueError(f"server_opt must be 'sgd' or 'adam', got {server_opt!r}")
        if policy.mode == "iid" and shard_size is None:
            raise ValueError("iid mode needs a shard_size")
        self.spec = spec
        self.population = population
        self.policy = policy
        self.local_epochs = local_epochs
        self.batch_size = batch_size
        self.client_lr = client_lr
        self.server_schedule = server_schedule
        self.constants = constants
        self.seed = seed
        self.fvn = fvn
        self.weighting = weighting
        self.shard_size = shard_size
        self.max_workers = max_workers
        if initial_weights is not None:
            self.weights = initial_weights.copy()
        else:
            self.weights = init_params(spec, seed)
        if server_opt == "adam":
            self.adam_state: AdamState | None = AdamState.initial(
                self.weights.shape[0], server_schedule.base_lr,
                adam_beta1, adam_beta2, adam_epsilon,
            )
        else:
            self.adam_state = None
        self.ledger = CostLedger()

    def _round_clients(self, round_index: int) -> tuple[list[int], list[ClientDataset]]:
        k = self.policy.clients_per_round
        if self.policy.mode == "iid":
            shards = make_iid_shards(self.population, k, self.shard_size, round_index, self.seed)
            return [s.client_id for s in shards], shards
        ids = select_clients(self.population, k, round_index, self.seed)
        return ids, [self.population.clients[i] for i in ids]

    def run_round(self, round_index: int) -> RoundReport:
        selected, clients = self._round_clients(round_index)
        std = fvn_std_at(self.fvn, round_index)

        def update(client):
            return client_update(
                self.spec, self.weights, client, self.policy,
                self.local_epochs, self.batch_size, self.client_lr,
                std, self.seed, round_index, self.fvn.transient,
            )

        if self.max_workers and self.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                results = list(pool.map(update, clients))
        else:
            results = [update(c) for c in clients]

        w_bar = aggregate(results, self.weighting)
        lr = lr_at(self.server_schedule, round_index)
        self.weights, self.adam_state = server_update(self.weights, w_bar, lr, self.adam_state)
        mu_round = float(np.mean([r.local_steps for r in results]))
        self.ledger = ledger_accrue(self.ledger, len(results), mu_round, self.constants)
        return RoundReport(
            round=round_index,
            selected=list(selected),
            aggregate_norm=float(np.linalg.norm(w_bar)),
            mean_client_loss=float(np.mean([r.local_loss_final for r in results])),
            lr_server=lr,
            fvn_std=std,
            mu_actual=mu_round,
            cfmq_cumulative=self.ledger.cfmq_bytes,
        )


class CentralizedTrainer:
    """Plain mini-batch training on one pooled dataset, with the same
    noise injector as the federated arm (a single stream)."""

    def __init__(
        self,
        spec: ModelSpec,
        data: Batch,
        *,
        batch_size: int,
        schedule: LrSchedule,
        seed: int,
        optimizer: str = "sgd",
        adam_beta1: float = 0.9,
        adam_beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        vn: FvnConfig = FvnConfig.disabled(),
        initial_weights: np.ndarray | None = None,
    ):
        if optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {optimizer!r}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.spec = spec
        self.data = data
        self.batch_size = batch_size
        self.schedule = schedule
        self.seed = seed
        self.vn = vn
        if initial_weights is not None:
            self.weights = initial_weights.copy()
        else:
            self.weights = init_params(spec, seed)
        if optimizer == "adam":
            self.adam_state: AdamState | None = AdamState.initial(
                self.weights.shape[0], schedule.base_lr,
                adam_beta1, adam_beta2, adam_epsilon,
            )
        else:
            self.adam_state = None
        self._rng = substream(seed, "central_shuffle")
        self._order = self._rng.permutation(len(data))
        self._pos = 0

    def _next_batch(self) -> Batch:
        if self._pos >= len(self._order):
            self._order = self._rng.permutation(len(self.data))
            self._pos = 0
        sel = self._order[self._pos : self._pos + self.batch_size]
        self._pos += len(sel)
        return Batch(self.data.features[sel], self.data.labels[sel])

    def step(self, step_index: int) -> float:
        """One optimizer step; returns the pre-update loss on its batch."""
        batch = self._next_batch()
        before = loss(self.spec, self.weights, batch)
        std = fvn_std_at(self.vn, step_index)
        if std > 0.0:
            w_used = fvn_perturb(self.weights, std, self.seed, step_index, 0, 0)
        else:
            w_used = self.weights
        g = gradient(self.spec, w_used, batch)
        base = self.weights if self.vn.transient else w_used
        lr = lr_at(self.schedule, step_index)
        if self.adam_state is None:
            self.weights = base - lr * g
        else:
            self.weights, self.adam_state = adam_step(
                replace(self.adam_state, lr=lr), base, g
            )
        return before


def train_centralized(
    spec: ModelSpec,
    data: Batch,
    *,
    steps: int,
    batch_size: int,
    schedule: LrSchedule,
    seed: int,
    optimizer: str = "sgd",
    vn: FvnConfig = FvnConfig.disabled(),
    initial_weights: np.ndarray | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Centralized mini-batch training; returns (weights, per-step loss trace)."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    trainer = CentralizedTrainer(
        spec, data, batch_size=batch_size, schedule=schedule, seed=seed,
        optimizer=optimizer, vn=vn, initial_weights=initial_weights,
    )
    trace = [trainer.step(s) for s in range(steps)]
    return trainer.weights, trace
