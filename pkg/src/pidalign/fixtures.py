"""Bundled miniature case study: a pumped filter line with a bypass.

The scene is a small plant section where the inline filter (and its
flange connections to the two tees) is wrapped in heating isolation, so
nothing is segmented there; the schematic keeps the filter. Matching
the two should pair every scene node with its true counterpart and
leave the filter as the lone unmatched target.
"""

from __future__ import annotations

import json
from importlib import resources

from .functional import RawPid, Vocabulary, parse_raw_pid
from .matching import Mapping, mapping_from_dict
from .scene import EquipmentInstance, PipeElement, parse_scene


def _read(name: str) -> str:
    return resources.files("pidalign").joinpath("data/fig5").joinpath(name).read_text()


def load_fig5_scene() -> tuple[list[PipeElement], list[EquipmentInstance]]:
    return parse_scene(json.loads(_read("scene.json")))


def load_fig5_pid() -> RawPid:
    return parse_raw_pid(json.loads(_read("pid.json")))


def load_fig5_vocab() -> Vocabulary:
    return Vocabulary.from_text(_read("vocab.txt"))


def load_fig5_expected_mapping() -> Mapping:
    """Ground-truth pairing; confidences in the file are omitted (1.0)."""
    return mapping_from_dict(json.loads(_read("expected_mapping.json")))
