"""Analysis core: input reconstruction, source and operator classification, activity tags, skill, linkage."""
from __future__ import annotations

from .activity import (
    ActivityTag, SkillAssessment, SkillClass, SkillWeights, score_skill, tag_activities,
)
from .linkage import Cluster, RegionMap, link_intruders
from .operator import Evidence, OperatorVerdict, Verdict, classify_operator, reconstruct_input
from .pipeline import Analysis, ForensicsConfig, IntrusionReport, analyze
from .sources import SourceClass, SourceProfile, build_profiles, classify_source, detect_dictionary
from .timeline import AccountTimeline, coarse_duration, compute_account_timeline
from .trace import build_trace

__all__ = [
    "ActivityTag", "SkillAssessment", "SkillClass", "SkillWeights", "score_skill", "tag_activities",
    "Cluster", "RegionMap", "link_intruders", "Evidence", "OperatorVerdict", "Verdict",
    "classify_operator", "reconstruct_input", "Analysis", "ForensicsConfig", "IntrusionReport", "analyze",
    "SourceClass", "SourceProfile", "build_profiles", "classify_source", "detect_dictionary",
    "AccountTimeline", "coarse_duration", "compute_account_timeline", "build_trace",
]
