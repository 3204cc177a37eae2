"""Synthetic non-IID client populations and per-round sampling.

A population is a set of "speakers": each client owns a private Gaussian
feature cluster (its voice), while a single global rule derived from the
experiment seed assigns labels. Clients therefore differ in feature
location and in example count, but share the learning problem -- the two
non-IID axes this simulator dials.

All sampling here is deterministic given (seed, round, client_id); see
:mod:`fedsim.rng`.
"""

from dataclasses import dataclass

import numpy as np

from .models import Batch, Example
from .rng import substream

__all__ = [
    "ClientDataset",
    "Population",
    "SamplingPolicy",
    "CountDistribution",
    "generate_population",
    "select_clients",
    "sample_client_batchstream",
    "make_iid_shards",
    "split_eval",
    "pooled_batch",
    "save_population",
    "load_population",
]


@dataclass
class ClientDataset:
    """One client's examples. ``n_k`` is its example count."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"client {self.client_id}: {self.features.shape[0]} feature rows "
                f"vs {self.labels.shape[0]} labels"
            )
        if self.n_k < 1:
            raise ValueError(f"client {self.client_id} has no examples")

    @property
    def n_k(self) -> int:
        return self.features.shape[0]

    @property
    def examples(self) -> list[Example]:
        return Batch(self.features, self.labels).examples()


@dataclass
class Population:
    clients: list[ClientDataset]

    def __post_init__(self):
        ids = [c.client_id for c in self.clients]
        if ids != list(range(len(ids))):
            raise ValueError(f"client ids must be dense 0..{len(ids) - 1}, got {ids}")

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def total_n(self) -> int:
        return sum(c.n_k for c in self.clients)

    @property
    def feature_dim(self) -> int:
        return self.clients[0].features.shape[1]


@dataclass(frozen=True)
class SamplingPolicy:
    """How a round draws data: per-speaker (non_iid) or pooled shards (iid).

    ``data_limit`` caps the examples drawn from each selected client per
    round; the cap is redrawn fresh every round so the full client
    dataset is still seen over enough rounds.
    """

    mode: str = "non_iid"
    data_limit: int | None = None
    clients_per_round: int = 1

    def __post_init__(self):
        if self.mode not in ("iid", "non_iid"):
            raise ValueError(f"mode must be 'iid' or 'non_iid', got {self.mode!r}")
        if self.data_limit is not None and self.data_limit < 1:
            raise ValueError(f"data_limit must be >= 1 when set, got {self.data_limit}")
        if self.clients_per_round < 1:
            raise ValueError(f"clients_per_round must be >= 1, got {self.clients_per_round}")


@dataclass(frozen=True)
class CountDistribution:
    """Per-client example counts: fixed(n) or lognormal(mu, sigma), min 1."""

    kind: str
    n: int = 0
    mu: float = 0.0
    sigma: float = 0.0

    @classmethod
    def fixed(cls, n: int) -> "CountDistribution":
        if n < 1:
            raise ValueError(f"fixed count must be >= 1, got {n}")
        return cls("fixed", n=n)

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "CountDistribution":
        if sigma < 0:
            raise ValueError(f"lognormal sigma must be >= 0, got {sigma}")
        return cls("lognormal", mu=mu, sigma=sigma)

    def __post_init__(self):
        if self.kind not in ("fixed", "lognormal"):
            raise ValueError(f"unknown count distribution {self.kind!r}")

    def draw(self, num_clients: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(num_clients, self.n, dtype=np.int64)
        raw = rng.lognormal(mean=self.mu, sigma=self.sigma, size=num_clients)
        return np.maximum(1, np.floor(raw)).astype(np.int64)


def generate_population(
    num_clients: int,
    feature_dim: int,
    num_classes: int,
    counts: CountDistribution,
    cluster_spread: float,
    seed: int,
    center_scale: float = 1.0,
) -> Population:
    """Build a synthetic speaker population.

    Each client gets a private cluster center ~ N(0, center_scale^2 I);
    its examples are center + cluster_spread * N(0, I). Labels come from
    one global rule shared by every client: argmax of a random linear
    map for classifiers (num_classes >= 2), a random linear functional
    for regression (num_classes == 1). cluster_spread = 0 collapses each
    client onto its center (maximal non-IID-ness).
    """
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if feature_dim < 1:
        raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
    if cluster_spread < 0:
        raise ValueError(f"cluster_spread must be >= 0, got {cluster_spread}")
    rng = substream(seed, "population")
    rule_w = rng.standard_normal((feature_dim, max(num_classes, 1)))
    rule_b = rng.standard_normal(max(num_classes, 1))
    n_k = counts.draw(num_clients, rng)
    centers = center_scale * rng.standard_normal((num_clients, feature_dim))
    clients = []
    for k in range(num_clients):
        x = centers[k] + cluster_spread * rng.standard_normal((int(n_k[k]), feature_dim))
        scores = x @ rule_w + rule_b
        if num_classes >= 2:
            y = np.argmax(scores, axis=1).astype(np.int64)
        else:
            y = scores[:, 0].astype(np.float64)
        clients.append(ClientDataset(k, x, y))
    return Population(clients)


def select_clients(pop: Population, k: int, round_index: int, seed: int) -> list[int]:
    """Draw k distinct client ids uniformly, deterministic in (seed, round)."""
    m = pop.num_clients
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= clients_per_round <= population size, got {k} of {m}")
    rng = substream(seed, "select", round_index)
    return [int(i) for i in rng.choice(m, size=k, replace=False)]


def sample_client_batchstream(
    client: ClientDataset,
    policy: SamplingPolicy,
    local_epochs: int,
    batch_size: int,
    round_index: int,
    seed: int,
) -> list[Batch]:
    """The ordered batches one client consumes in one round.

    With a data limit L, first draws min(L, n_k) examples uniformly
    without replacement (fresh draw each round), then emits
    ``local_epochs`` independently shuffled epochs of batches of size
    <= batch_size (last batch of an epoch may be short).
    """
    if local_epochs < 1:
        raise ValueError(f"local_epochs must be >= 1, got {local_epochs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = substream(seed, "client_sample", round_index, client.client_id)
    if policy.data_limit is not None:
        take = min(policy.data_limit, client.n_k)
        subset = rng.choice(client.n_k, size=take, replace=False)
    else:
        subset = np.arange(client.n_k)
    batches = []
    for _ in range(local_epochs):
        order = rng.permutation(subset)
        for start in range(0, len(order), batch_size):
            sel = order[start : start + batch_size]
            batches.append(Batch(client.features[sel], client.labels[sel]))
    return batches


def make_iid_shards(
    pop: Population, k: int, shard_size: int, round_index: int, seed: int
) -> list[ClientDataset]:
    """k disjoint uniform shards of the pooled population.

    The IID control arm: shards play the role of clients for one round,
    with ids 0..k-1.
    """
    if k < 1 or shard_size < 1:
        raise ValueError(f"need k >= 1 and shard_size >= 1, got k={k}, shard_size={shard_size}")
    total = pop.total_n
    if k * shard_size > total:
        raise ValueError(
            f"cannot draw {k} disjoint shards of {shard_size} from {total} pooled examples"
        )
    features = np.concatenate([c.features for c in pop.clients])
    labels = np.concatenate([c.labels for c in pop.clients])
    rng = substream(seed, "iid_shards", round_index)
    picks = rng.choice(total, size=k * shard_size, replace=False)
    return [
        ClientDataset(i, features[picks[i * shard_size : (i + 1) * shard_size]],
                      labels[picks[i * shard_size : (i + 1) * shard_size]])
        for i in range(k)
    ]


def split_eval(pop: Population, eval_fraction: float, seed: int) -> tuple[Population, Batch]:
    """Withhold ~eval_fraction of each client's examples into a pooled eval set.

    Clients keep at least one training example; single-example clients
    contribute nothing to eval. The pooled eval set is IID with respect
    to the population mixture, so every experiment arm is scored on the
    same distribution.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    rng = substream(seed, "eval_split")
    train_clients = []
    held_x, held_y = [], []
    for c in pop.clients:
        take = int(np.floor(c.n_k * eval_fraction))
        if take == 0 and c.n_k >= 2:
            take = 1
        take = min(take, c.n_k - 1)
        order = rng.permutation(c.n_k)
        held, kept = order[:take], order[take:]
        if take:
            held_x.append(c.features[held])
            held_y.append(c.labels[held])
        train_clients.append(ClientDataset(c.client_id, c.features[kept], c.labels[kept]))
    if not held_x:
        raise ValueError("eval split is empty; population is too small to withhold from")
    return Population(train_clients), Batch(np.concatenate(held_x), np.concatenate(held_y))


def pooled_batch(pop: Population) -> Batch:
    """All examples of the population as one batch (client order)."""
    return Batch(
        np.concatenate([c.features for c in pop.clients]),
        np.concatenate([c.labels for c in pop.clients]),
    )


def save_population(pop: Population, path) -> None:
    """Write a population as line-oriented text.

    Header: "num_clients feature_dim". Then one line per example:
    client_id, the feature values, the label; space-separated, '.'
    decimal, UTF-8. Floats are written with repr so they round-trip
    exactly.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{pop.num_clients} {pop.feature_dim}\n")
        for c in pop.clients:
            integral = np.issubdtype(c.labels.dtype, np.integer)
            for i in range(c.n_k):
                feats = " ".join(repr(float(v)) for v in c.features[i])
                label = str(int(c.labels[i])) if integral else repr(float(c.labels[i]))
                f.write(f"{c.client_id} {feats} {label}\n")


def load_population(path) -> Population:
    """Inverse of :func:`save_population`."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"malformed population header: {header!r}")
        num_clients, feature_dim = int(header[0]), int(header[1])
        rows: dict[int, list[tuple[list[float], str]]] = {k: [] for k in range(num_clients)}
        for line_no, line in enumerate(f, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != feature_dim + 2:
                raise ValueError(f"line {line_no}: expected {feature_dim + 2} fields, got {len(parts)}")
            cid = int(parts[0])
            if cid not in rows:
                raise ValueError(f"line {line_no}: client id {cid} out of range 0..{num_clients - 1}")
            rows[cid].append(([float(v) for v in parts[1 : 1 + feature_dim]], parts[-1]))
    all_integral = all(
        _is_int_literal(label) for examples in rows.values() for _, label in examples
    )
    clients = []
    for cid in range(num_clients):
        if not rows[cid]:
            raise ValueError(f"client {cid} has no examples in file")
        feats = np.asarray([f for f, _ in rows[cid]], dtype=np.float64)
        if all_integral:
            labels = np.asarray([int(l) for _, l in rows[cid]], dtype=np.int64)
        else:
            labels = np.asarray([float(l) for _, l in rows[cid]], dtype=np.float64)
        clients.append(ClientDataset(cid, feats, labels))
    return Population(clients)


def _is_int_literal(token: str) -> bool:
    return token.lstrip("+-").isdigit()
