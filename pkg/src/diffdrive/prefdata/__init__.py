from .anchors import AnchorSet, extract_anchors, kmeans
from .candidates import CandidateScene, generate_candidates
from .judges import Decision, JudgeResult, OracleJudge, HumanJudge, VlmJudgeClient, VlmConfig, oracle_score
from .pairs import PreferencePair, PendingPair, make_pairs
from .store import append_records, load_pref_dataset, append_pending, load_pending, resolve_pending

__all__ = [
    "AnchorSet",
    "extract_anchors",
    "kmeans",
    "CandidateScene",
    "generate_candidates",
    "Decision",
    "JudgeResult",
    "OracleJudge",
    "HumanJudge",
    "VlmJudgeClient",
    "VlmConfig",
    "oracle_score",
    "PreferencePair",
    "PendingPair",
    "make_pairs",
    "append_records",
    "load_pref_dataset",
    "append_pending",
    "load_pending",
    "resolve_pending",
]
