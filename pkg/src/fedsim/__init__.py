"""fedsim: a desk-scale federated averaging simulator.

Rounds of client-local SGD on synthetic non-IID "speaker" data, with
n_k-weighted delta aggregation and a server optimizer; a per-client data
limit that dials non-IID-ness toward IID at extra cost; per-client
scheduled weight noise; and a unified communication/compute cost metric
in bytes. Everything is deterministic in the experiment seed.
"""

from .config import ConfigError, ExperimentConfig, parse_config, serialize_config
from .cost import CostConstants, CostLedger, cfmq, default_constants, ledger_accrue, mu_formula
from .data import (
    ClientDataset,
    CountDistribution,
    Population,
    SamplingPolicy,
    generate_population,
    load_population,
    make_iid_shards,
    sample_client_batchstream,
    save_population,
    select_clients,
    split_eval,
)
from .fedavg import (
    ClientUpdateResult,
    FedAvgTrainer,
    RoundReport,
    aggregate,
    client_update,
    server_update,
    train_centralized,
)
from .harness import MetricsRow, compare_experiments, emit_csv, run_experiment
from .models import (
    Batch,
    Example,
    ModelSpec,
    finite_diff_gradient,
    gradient,
    init_params,
    loss,
    param_count,
)
from .optim import (
    AdamState,
    FvnConfig,
    LrSchedule,
    SgdState,
    adam_step,
    fvn_perturb,
    fvn_std_at,
    lr_at,
    sgd_step,
)

__version__ = "0.1.0"
