"""Scale development and validation engine for the TAIGHA trust/distrust instrument."""
from .assoc import code_reliance, correlation_with_ci, fisher_ci, validity_report
from .cfa import CfaFit, CfaModel, FitIndices, fit_cfa, fit_from_responses, fit_indices
from .dataset import (
    DataError,
    DecisionRecord,
    Item,
    ItemCatalog,
    ResponseMatrix,
    apply_reverse_scoring,
    load_decisions,
    load_responses,
)
from .genclient import ConstructSpec, HttpProvider, MockProvider, ProviderConfig, embed_items, generate_items
from .itemstats import corrected_item_total, item_difficulty, item_statistics
from .judge import JudgePanelRatings, assess_panel, prune_by_validity
from .netreduce import EgaConfig, ItemPartition, ebic_sparse_network, genie_reduce, nmi
from .reliability import cronbach_alpha, mcdonald_omega, reliability_block
from .shortform import select_short_form, validate_short_form
from .simulate import PopulationModel, load_preset, simulate_responses

__version__ = "0.1.0"
