"""Online multi-source adaptation for drifting data streams.

Learns a classifier for an unlabelled target stream from several
labelled source streams: a denoising autoencoder with a shared encoder
and softmax head, trained one pass in a test-then-train loop, with
discrepancy-weighted regularization, graph-smoothness re-weighting, and
control-chart-driven hidden-unit growing and pruning.
"""

from streamadapt.engine import AblationFlags, RunResult, TraceRecord, evaluate, run
from streamadapt.model import ModelConfig, Network, init_network, predict
from streamadapt.streams import (
    Dataset,
    Rounds,
    StreamSet,
    build_rounds,
    gen_hyperplane,
    gen_sea,
    load_csv,
    save_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AblationFlags",
    "Dataset",
    "ModelConfig",
    "Network",
    "Rounds",
    "RunResult",
    "StreamSet",
    "TraceRecord",
    "__version__",
    "build_rounds",
    "evaluate",
    "gen_hyperplane",
    "gen_sea",
    "init_network",
    "load_csv",
    "predict",
    "run",
    "save_csv",
]
