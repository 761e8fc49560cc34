"""The declarative configuration language."""

from declml.config.document import RawConfig, parse_document, read_document, render_tree
from declml.config.paths import get_path, override_path, resolve_slot
from declml.config.schema import (
    CombinerSpec,
    ComponentSpec,
    FeatureSpec,
    GoalSpec,
    HyperoptSpec,
    PipelineConfig,
    PreprocessingSpec,
    SearchDomain,
    SearchSpace,
    SplitSpec,
    TrainingSpec,
    compile_config,
)


def canonical_render(config: PipelineConfig) -> str:
    """Deterministic text form: JSON, sorted keys, 2-space indent, LF, UTF-8."""
    return render_tree(config.to_dict())


def load_config(path) -> PipelineConfig:
    return compile_config(read_document(path))


__all__ = [
    "CombinerSpec",
    "ComponentSpec",
    "FeatureSpec",
    "GoalSpec",
    "HyperoptSpec",
    "PipelineConfig",
    "PreprocessingSpec",
    "RawConfig",
    "SearchDomain",
    "SearchSpace",
    "SplitSpec",
    "TrainingSpec",
    "canonical_render",
    "compile_config",
    "get_path",
    "load_config",
    "override_path",
    "parse_document",
    "read_document",
    "render_tree",
    "resolve_slot",
]
