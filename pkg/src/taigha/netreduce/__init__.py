"""Network-based item reduction: EGA, NMI, unique variable analysis, bootstrap stability."""
from .communities import ItemPartition, PartitionError, detect_communities, modularity, nmi, walktrap
from .network import (
    ItemNetwork,
    NetworkError,
    correlation_from_data,
    ebic_sparse_network,
    glasso_path,
    lambda_grid,
    nearest_correlation_psd,
    partial_correlations,
    similarity_from_embeddings,
)
from .reduce import (
    AuditEntry,
    EgaConfig,
    GenieResult,
    StabilityReport,
    bootstrap_stability,
    ega,
    genie_reduce,
    uva_reduce,
    weighted_topological_overlap,
)
