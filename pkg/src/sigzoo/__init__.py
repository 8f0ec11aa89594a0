"""Distribution-indexed retrieval of labeled data and trained models.

Datasets are summarized by the distribution of their samples over learned
clusters; that signature drives labeled-data lookup, pseudo-labeling, model
recommendation by divergence, and drift-triggered refits.
"""

from .clustering import (
    ClusterAssignment,
    ClusterModel,
    ElbowReport,
    assign,
    fit_kmeans,
    fuzzy_memberships,
    normalized_distance,
    select_k_elbow,
)
from .config import ServiceConfig, load_config
from .datastore import DataRecord, DataStore, LookupResult, PseudoLabelOutcome
from .distribution import DatasetDistribution, compute_pdf, jsd
from .drift import (
    CertaintyReport,
    DriftMonitor,
    MonitorHistory,
    TriggerPolicy,
    UpdateSummary,
    compute_certainty,
    run_system_update,
    should_trigger,
)
from .embedding import (
    EmbedderSpec,
    RawSample,
    embed,
    embed_batch,
    fit_embedder,
    ingest_external_embeddings,
)
from .errors import SigzooError
from .modelzoo import ModelRecord, ModelZoo, Recommendation
from .service import Generation, SigzooService

__version__ = "0.1.0"

__all__ = [
    "CertaintyReport",
    "ClusterAssignment",
    "ClusterModel",
    "DataRecord",
    "DataStore",
    "DatasetDistribution",
    "DriftMonitor",
    "ElbowReport",
    "EmbedderSpec",
    "Generation",
    "LookupResult",
    "ModelRecord",
    "ModelZoo",
    "MonitorHistory",
    "PseudoLabelOutcome",
    "RawSample",
    "Recommendation",
    "ServiceConfig",
    "SigzooError",
    "SigzooService",
    "TriggerPolicy",
    "UpdateSummary",
    "assign",
    "compute_certainty",
    "compute_pdf",
    "embed",
    "embed_batch",
    "fit_embedder",
    "fit_kmeans",
    "fuzzy_memberships",
    "ingest_external_embeddings",
    "jsd",
    "load_config",
    "normalized_distance",
    "run_system_update",
    "select_k_elbow",
    "should_trigger",
    "__version__",
]
