"""Open-vocabulary safe-landing toolkit: per-frame prompt engineering,
segmentation fusion, a six-state landing controller, and a desk-scale
simulator with paired-experiment evaluation."""

__version__ = "0.1.0"

from .backends import BackendDescriptor, MockBackend, create_backend
from .config import RunConfig, load_run_config
from .fusion import SafetyHeatmap, fuse_pipeline
from .policy import LandingPolicy, MachineState, PolicyConfig
from .prompts import PromptConfig, build_prompt, generate_prompt_set, select_words
from .sim import EpisodeResult, SimConfig, run_episode, run_matrix
from .vocab import DescriptionVocabulary, TargetLists, load_targets, load_vocabulary

__all__ = [
    "BackendDescriptor",
    "DescriptionVocabulary",
    "EpisodeResult",
    "LandingPolicy",
    "MachineState",
    "MockBackend",
    "PolicyConfig",
    "PromptConfig",
    "RunConfig",
    "SafetyHeatmap",
    "SimConfig",
    "TargetLists",
    "build_prompt",
    "create_backend",
    "fuse_pipeline",
    "generate_prompt_set",
    "load_run_config",
    "load_targets",
    "load_vocabulary",
    "run_episode",
    "run_matrix",
    "select_words",
]
