"""Neural parameter search: prune fine-tuned task vectors by searching
per-subspace weights with CMA-ES, then transfer, fuse or compress them."""

__version__ = "0.1.0"

from .applications import (
    LAMBDA_RANGE,
    FusionResult,
    NPSFusion,
    StorageReport,
    TransferConfig,
    fuse,
    fuse_search,
    h_score,
    normalized_accuracy,
    storage_report,
    transfer,
)
from .baselines import DareConfig, dare, task_arithmetic, ties_merge, weight_average
from .bundle import (
    CompressedBundle,
    compress,
    decode_bundle,
    encode_bundle,
    load_bundle,
    reconstruct,
    save_bundle,
)
from .cmaes import CMAES, GenerationRecord, SearchBudget, SearchResult, run
from .exceptions import (
    DegenerateCoefficientsError,
    InvalidArgumentError,
    NPSError,
    NumericError,
    ParseError,
    SearchAbortedError,
    StructuralMismatchError,
    TaskNotFoundError,
)
from .params import (
    Checkpoint,
    TaskVector,
    TensorSpec,
    apply,
    decode_checkpoint,
    diff,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .pruning import Mask, NPSPruner, PrunedTaskVector, SearchOutcome, nps_search, prune
from .subspace import SubspacePartition, adjusted_model, partition, reweight

__all__ = [
    "__version__",
    "CMAES",
    "Checkpoint",
    "CompressedBundle",
    "DareConfig",
    "DegenerateCoefficientsError",
    "FusionResult",
    "GenerationRecord",
    "InvalidArgumentError",
    "LAMBDA_RANGE",
    "Mask",
    "NPSError",
    "NPSFusion",
    "NPSPruner",
    "NumericError",
    "ParseError",
    "PrunedTaskVector",
    "SearchAbortedError",
    "SearchBudget",
    "SearchOutcome",
    "SearchResult",
    "StorageReport",
    "StructuralMismatchError",
    "SubspacePartition",
    "TaskNotFoundError",
    "TaskVector",
    "TensorSpec",
    "TransferConfig",
    "adjusted_model",
    "apply",
    "compress",
    "dare",
    "decode_bundle",
    "decode_checkpoint",
    "diff",
    "encode_bundle",
    "encode_checkpoint",
    "fuse",
    "fuse_search",
    "h_score",
    "load_bundle",
    "load_checkpoint",
    "normalized_accuracy",
    "nps_search",
    "partition",
    "prune",
    "reconstruct",
    "reweight",
    "run",
    "save_bundle",
    "save_checkpoint",
    "storage_report",
    "task_arithmetic",
    "ties_merge",
    "transfer",
    "weight_average",
]
