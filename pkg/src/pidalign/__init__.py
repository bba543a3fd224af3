"""pidalign: align 3D industrial scene graphs with P&ID functional graphs.

Pipeline: build a scene graph from segmented 3D primitives, ingest the
digitized P&ID as a functional graph, match the two with an optimal-
transport matcher robust to structure perturbation, then iterate a
human-in-the-loop inconsistency resolution cycle until both agree.
"""

from .errors import (
    DegreeTooHighError,
    DuplicateIdError,
    EmptyGraphError,
    GraphEditError,
    InvalidGraphError,
    KindMismatchError,
    MaxRoundsExceededError,
    NeighborsUnmatchedError,
    NonFiniteError,
    PidalignError,
    UnknownNodeError,
)
from .graph import (
    AlignmentGraph,
    GraphEdit,
    NodeAttribute,
    NodeKind,
    Provenance,
    apply_edits,
    contract_degree2_pipes,
    edit_from_dict,
    edit_to_dict,
    graph_from_dict,
    graph_from_json,
    graph_to_dict,
    graph_to_json,
    prune_open_pipes,
    simplify,
)
from .scene import (
    DegreeWarning,
    EquipmentAttach,
    EquipmentInstance,
    PipeElement,
    PipeKind,
    SceneConfig,
    SceneGraphBuilder,
    attach_equipment,
    build_scene_graph,
    link_pipe_elements,
    load_scene,
    parse_scene,
    pipe_distance,
    scene_to_dict,
)
from .functional import (
    FunctionalGraphBuilder,
    PidNode,
    RawPid,
    Vocabulary,
    build_functional_graph,
    load_raw_pid,
    parse_raw_pid,
    raw_pid_to_dict,
    remove_equipment,
)
from .matching import (
    Coupling,
    GraphMatcher,
    Mapping,
    MatchConfig,
    extract_mapping,
    load_coupling,
    mapping_from_dict,
    mapping_from_json,
    mapping_to_dict,
    mapping_to_json,
    match_graphs,
    node_features,
    save_coupling,
    structure_bases,
)
from .consistency import (
    AlignmentSession,
    Inconsistency,
    InconsistencyKind,
    InconsistencyStatus,
    Resolution,
    get_inconsistencies,
    infer_hidden_location,
    open_items,
    report_to_dict,
    report_to_json,
    run_alignment_loop,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentGraph",
    "AlignmentSession",
    "Coupling",
    "DegreeTooHighError",
    "DegreeWarning",
    "DuplicateIdError",
    "EmptyGraphError",
    "EquipmentAttach",
    "EquipmentInstance",
    "FunctionalGraphBuilder",
    "GraphEdit",
    "GraphEditError",
    "GraphMatcher",
    "Inconsistency",
    "InconsistencyKind",
    "InconsistencyStatus",
    "InvalidGraphError",
    "KindMismatchError",
    "Mapping",
    "MatchConfig",
    "MaxRoundsExceededError",
    "NeighborsUnmatchedError",
    "NodeAttribute",
    "NodeKind",
    "NonFiniteError",
    "PidNode",
    "PidalignError",
    "PipeElement",
    "PipeKind",
    "Provenance",
    "RawPid",
    "Resolution",
    "SceneConfig",
    "SceneGraphBuilder",
    "UnknownNodeError",
    "Vocabulary",
    "apply_edits",
    "attach_equipment",
    "build_functional_graph",
    "build_scene_graph",
    "contract_degree2_pipes",
    "edit_from_dict",
    "edit_to_dict",
    "extract_mapping",
    "get_inconsistencies",
    "graph_from_dict",
    "graph_from_json",
    "graph_to_dict",
    "graph_to_json",
    "infer_hidden_location",
    "link_pipe_elements",
    "load_coupling",
    "load_raw_pid",
    "load_scene",
    "mapping_from_dict",
    "mapping_from_json",
    "mapping_to_dict",
    "mapping_to_json",
    "match_graphs",
    "node_features",
    "open_items",
    "parse_raw_pid",
    "parse_scene",
    "pipe_distance",
    "prune_open_pipes",
    "raw_pid_to_dict",
    "remove_equipment",
    "report_to_dict",
    "report_to_json",
    "run_alignment_loop",
    "save_coupling",
    "scene_to_dict",
    "simplify",
    "structure_bases",
]
