"""Unified communication + local-computation cost accounting, in bytes.

One federated round costs every participating client a payload
round-trip P plus mu local optimization steps at peak memory nu, so a
whole run costs

    R * K * (P + alpha * mu * nu)   [bytes]

with alpha balancing the two components. The ledger accrues this per
round with the *measured* mean step count of that round; the closed-form
predictor mu = e*N / (b*K) is kept alongside for planning, since data
limits and short final batches make it approximate.

Server-side resources are deliberately not accounted.
"""

from dataclasses import dataclass, replace

__all__ = [
    "CostConstants",
    "CostLedger",
    "mu_formula",
    "cfmq",
    "default_constants",
    "ledger_accrue",
]

BYTES_PER_TERABYTE = 1e12


@dataclass(frozen=True)
class CostConstants:
    """P (round-trip payload bytes), nu (peak step memory bytes), alpha."""

    payload_bytes: float
    peak_mem_bytes: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.payload_bytes < 0:
            raise ValueError(f"payload_bytes must be >= 0, got {self.payload_bytes}")
        if self.peak_mem_bytes < 0:
            raise ValueError(f"peak_mem_bytes must be >= 0, got {self.peak_mem_bytes}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class CostLedger:
    """Running cost total across rounds; cfmq_bytes never decreases."""

    rounds: int = 0
    clients_per_round: int = 0
    mu_sum: float = 0.0
    cfmq_bytes: float = 0.0


def mu_formula(local_epochs: int, num_examples: int, batch_size: int, num_clients: int) -> float:
    """Predicted mean local steps per client: e*N / (b*K).

    N is the total number of examples participating in the round.
    """
    if local_epochs < 0 or num_examples < 0:
        raise ValueError("local_epochs and num_examples must be >= 0")
    if batch_size < 1 or num_clients < 1:
        raise ValueError(
            f"batch_size and num_clients must be >= 1, got b={batch_size}, K={num_clients}"
        )
    return (local_epochs * num_examples) / (batch_size * num_clients)


def cfmq(rounds: int, clients_per_round: int, constants: CostConstants, mu: float) -> float:
    """Total cost in bytes of `rounds` uniform rounds: R*K*(P + alpha*mu*nu)."""
    if rounds < 0 or clients_per_round < 0 or mu < 0:
        raise ValueError("rounds, clients_per_round and mu must be >= 0")
    return rounds * clients_per_round * (
        constants.payload_bytes + constants.alpha * mu * constants.peak_mem_bytes
    )


def default_constants(model_bytes: float) -> CostConstants:
    """Payload = 2x model size, peak memory = model + 10% intermediates, alpha = 1."""
    if model_bytes < 0:
        raise ValueError(f"model_bytes must be >= 0, got {model_bytes}")
    return CostConstants(
        payload_bytes=2.0 * model_bytes,
        peak_mem_bytes=1.1 * model_bytes,
        alpha=1.0,
    )


def ledger_accrue(
    ledger: CostLedger, clients_per_round: int, mu_round: float, constants: CostConstants
) -> CostLedger:
    """Account one finished round at its measured mean local step count."""
    if clients_per_round < 0:
        raise ValueError(f"clients_per_round must be >= 0, got {clients_per_round}")
    if mu_round < 0:
        raise ValueError(f"mu_round must be >= 0, got {mu_round}")
    increment = clients_per_round * (
        constants.payload_bytes + constants.alpha * mu_round * constants.peak_mem_bytes
    )
    return replace(
        ledger,
        rounds=ledger.rounds + 1,
        clients_per_round=clients_per_round,
        mu_sum=ledger.mu_sum + mu_round,
        cfmq_bytes=ledger.cfmq_bytes + increment,
    )
