"""Dotted config paths and single-slot overrides.

A path walks the rendered config tree; inside ``input_features`` and
``output_features`` the segment after the list is a feature *name*, inside any
other list it is an integer index. Example::

    input_features.title.encoder.embedding_size
"""

from __future__ import annotations

from typing import Any

from declml.config.schema import PipelineConfig, compile_config
from declml.errors import PathError, TypeMismatch, UnknownType
from declml.features import DEFAULT_REGISTRY, TypeRegistry

_SCALARS = (str, int, float, bool, type(None))


def _step(node: Any, seg: str, path: str) -> tuple[Any, Any]:
    if isinstance(node, dict):
        if seg not in node:
            raise PathError(path, f"no key {seg!r}")
        return node, seg
    if isinstance(node, list):
        if node and all(isinstance(x, dict) and "name" in x for x in node):
            for i, item in enumerate(node):
                if item["name"] == seg:
                    return node, i
            raise PathError(path, f"no feature named {seg!r}")
        try:
            i = int(seg)
        except ValueError:
            raise PathError(path, f"list segment {seg!r} is not an index") from None
        if not 0 <= i < len(node):
            raise PathError(path, f"index {i} out of range")
        return node, i
    raise PathError(path, f"cannot descend into scalar at {seg!r}")


def resolve_slot(tree: Any, path: str) -> tuple[Any, Any]:
    """Return ``(container, key)`` of the scalar slot ``path`` names."""
    if not isinstance(path, str) or not path:
        raise PathError(str(path), "empty path")
    node = tree
    container = key = None
    for seg in path.split("."):
        container, key = _step(node, seg, path)
        node = container[key]
    if not isinstance(node, _SCALARS):
        raise PathError(path, "addresses a section, not a scalar")
    return container, key


def get_path(config: PipelineConfig, path: str) -> Any:
    container, key = resolve_slot(config.to_dict(), path)
    return container[key]


def _check_type(path: str, current: Any, value: Any) -> Any:
    if not isinstance(value, _SCALARS):
        raise TypeMismatch(path, f"override value must be a scalar, got {type(value).__name__}")
    if current is None or value is None:
        return value
    if isinstance(current, bool):
        ok = isinstance(value, bool)
    elif isinstance(current, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(current, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok:
            value = float(value)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise TypeMismatch(path, f"slot holds {type(current).__name__}, got {type(value).__name__} {value!r}")
    return value


def override_path(
    config: PipelineConfig, path: str, value: Any, registry: TypeRegistry = DEFAULT_REGISTRY
) -> PipelineConfig:
    """Return a new, re-validated config that differs from ``config`` at ``path``.

    Swapping an encoder/decoder ``name`` keeps only the parameters the new
    component accepts (the rest fall back to its defaults); changing a feature
    ``type`` resets that feature's encoder/decoder and preprocessing overrides.
    Feature-level preprocessing is materialized at compile time, so overriding
    a global per-type default does not reach already-compiled features.
    """
    tree = config.to_dict()
    container, key = resolve_slot(tree, path)
    value = _check_type(path, container[key], value)
    container[key] = value
    segs = path.split(".")
    if segs[0] in ("input_features", "output_features") and len(segs) >= 3:
        feature = tree[segs[0]][_step(tree[segs[0]], segs[1], path)[1]]
        if len(segs) == 4 and segs[2] in ("encoder", "decoder") and segs[3] == "name":
            try:
                cap = registry.capabilities_of(feature["type"])
            except UnknownType:
                cap = None
            comps = None if cap is None else (cap.encoders if segs[2] == "encoder" else cap.decoders)
            if comps and value in comps:
                legal = comps[value].params
                feature[segs[2]] = {k: v for k, v in feature[segs[2]].items() if k == "name" or k in legal}
        elif len(segs) == 3 and segs[2] == "type":
            feature.pop("encoder", None)
            feature.pop("decoder", None)
            feature["preprocessing"] = {}
    return compile_config(tree, registry)
