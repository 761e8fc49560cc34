"""Reading and writing configuration documents.

Two surface syntaxes are accepted: a YAML subset (mappings, lists, scalars; no
anchors, aliases or tags beyond the core scalars) and JSON. Rendering always
emits JSON with sorted keys and 2-space indentation, which the YAML reader
accepts too.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

import yaml

from declml.errors import ConfigSyntaxError, MissingFile

RawConfig = Any  # nested dict/list/scalar tree exactly as parsed


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader with YAML-1.2-like scalars, duplicate-key and alias rejection."""

    def compose_node(self, parent, index):
        event = self.peek_event()
        if isinstance(event, yaml.AliasEvent) or getattr(event, "anchor", None):
            mark = event.start_mark
            raise ConfigSyntaxError("anchors and aliases are not supported", mark.line + 1, mark.column + 1)
        return super().compose_node(parent, index)

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=True)
            try:
                duplicate = key in seen
            except TypeError:
                mark = key_node.start_mark
                raise ConfigSyntaxError("mapping keys must be scalars", mark.line + 1, mark.column + 1) from None
            if duplicate:
                mark = key_node.start_mark
                raise ConfigSyntaxError(f"duplicate key {key!r}", mark.line + 1, mark.column + 1)
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


_BOOL_TAG = "tag:yaml.org,2002:bool"
_StrictLoader.yaml_implicit_resolvers = {
    ch: [(tag, rx) for tag, rx in resolvers if tag != _BOOL_TAG]
    for ch, resolvers in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
# only true/false are booleans (yes/no/on/off stay strings)
_StrictLoader.add_implicit_resolver(
    _BOOL_TAG, re.compile(r"^(?:true|True|TRUE|false|False|FALSE)$"), list("tTfF")
)
# exponent floats without a decimal point, e.g. 1e-4
_StrictLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)[eE][-+]?[0-9]+$"),
    list("-+0123456789."),
)


def _reject_duplicate_pairs(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def parse_document(text: str, fmt: str = "yaml") -> RawConfig:
    """Parse a configuration document into a plain tree; no semantic checks.

    An empty document parses to an empty mapping.
    """
    if fmt == "json":
        if not text.strip():
            return {}
        try:
            return json.loads(text, object_pairs_hook=_reject_duplicate_pairs)
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
        except ValueError as exc:
            # duplicate key; json gives no position for hook errors
            raise ConfigSyntaxError(str(exc)) from None
    if fmt != "yaml":
        raise ValueError(f"unknown document format {fmt!r}")
    try:
        tree = yaml.load(text, Loader=_StrictLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        msg = exc.problem or str(exc)
        if mark is None:
            raise ConfigSyntaxError(msg) from None
        raise ConfigSyntaxError(msg, mark.line + 1, mark.column + 1) from None
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError(str(exc)) from None
    return {} if tree is None else tree


def format_for_path(path: str | Path) -> str:
    return "json" if str(path).endswith(".json") else "yaml"


def read_document(path: str | Path) -> RawConfig:
    """Parse a ``.cfg.yml`` / ``.cfg.json`` file (format chosen by extension)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"config file not found: {p}") from None
    except OSError as exc:
        raise MissingFile(f"cannot read config file {p}: {exc.strerror}") from None
    return parse_document(text, format_for_path(p))


def render_tree(tree: Any) -> str:
    return json.dumps(tree, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
