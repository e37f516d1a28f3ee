"""Group decision prediction and reverse social choice from group implicit feedback."""

from .groups import Group, GroupDataset, SynthConfig
from .model import DeepGroupModel, ModelConfig
from .preflib import PreferenceProfile, Ranking, parse_preference_file, sample_users
from .social_choice import DecisionRule, group_decision, kendall_tau

__all__ = [
    "DecisionRule",
    "DeepGroupModel",
    "Group",
    "GroupDataset",
    "ModelConfig",
    "PreferenceProfile",
    "Ranking",
    "SynthConfig",
    "group_decision",
    "kendall_tau",
    "parse_preference_file",
    "sample_users",
]
