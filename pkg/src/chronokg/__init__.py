"""chronokg: temporal knowledge-graph QA with anchored iterative retrieval."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .agents import QueryIntent, QueryKind, RulePlanner, RuleVerifier
from .controller import RunConfig, RunMode, RunTrace, run, run_single_pass
from .graph import RawRecord, TemporalKG, map_record
from .intervals import AllenRelation, TimeRef, allen_relation
from .retrieval import Predicate, RetrievalParams, RetrievalPattern, psi
from .synthesis import Answer, Verdict

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "AllenRelation",
    "Answer",
    "Predicate",
    "QueryIntent",
    "QueryKind",
    "RawRecord",
    "RetrievalParams",
    "RetrievalPattern",
    "RulePlanner",
    "RuleVerifier",
    "RunConfig",
    "RunMode",
    "RunTrace",
    "TemporalKG",
    "TimeRef",
    "Verdict",
    "allen_relation",
    "map_record",
    "psi",
    "run",
    "run_single_pass",
]
