"""Diversity-aware tactic filtering for best-first proof search.

Candidate tactics are pruned with a k-DPP over quality-weighted embeddings
before they reach the (expensive) proof environment.
"""
from .dpp import KDPP, FeatureBank, Kernel, build_kernel, eigendecompose, esp_table, exact_k_dpp_pmf, sample_k_dpp
from .filter import FilterConfig, ScoredTactic, Strategy, TacticFilter, filter_tactics
from .search import ProofTree, SearchBudget, best_first_search, verify_proof
from .synthetic import SyntheticWorld, synthetic_world
from .transitions import ErrorMessage, Subgoals, TransitionLog, TransitionRecord, read_log, write_log

__version__ = "0.1.0"

__all__ = [
    "KDPP", "FeatureBank", "Kernel", "build_kernel", "eigendecompose", "esp_table",
    "exact_k_dpp_pmf", "sample_k_dpp", "FilterConfig", "ScoredTactic", "Strategy",
    "TacticFilter", "filter_tactics", "ProofTree", "SearchBudget", "best_first_search",
    "verify_proof", "SyntheticWorld", "synthetic_world", "ErrorMessage", "Subgoals",
    "TransitionLog", "TransitionRecord", "read_log", "write_log",
]
