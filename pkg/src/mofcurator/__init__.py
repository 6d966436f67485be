"""Curation engine for experimental MOF crystal structures.

Validates CIFs against literature-derived reference graphs (component
stoichiometry, coordination environments, subgraph counts) and repairs
bond, hydrogen, and disorder errors, with an energy model ranking
ambiguous corrections.
"""

__version__ = "0.1.0"

from .cif import CrystalStructure, Lattice, MalformedCif, Site, parse_cif, write_cif
from .crystal import (
    BondPolicy,
    PeriodicGraph,
    build_graph,
    connected_components,
    min_image_distance,
    remove_free_solvent,
)
from .energy import LennardJonesModel, ModelFailure, SubprocessEnergyModel
from .formula import ComponentRole, ComponentSpec, parse_structural_formula
from .inspection import (
    DiagnosisReport,
    coordination_env_test,
    diagnose,
    species_scaling_test,
    subgraph_match_test,
)
from .matching import MatchTimeout, find_embeddings, maximum_disjoint
from .molgraph import MolecularGraph
from .refgraph import (
    ReferenceGraph,
    UnresolvedName,
    build_reference_graph,
    resolve_name,
    solvent_library,
)
from .repair import (
    RepairOutcome,
    correct_bonds,
    correct_hydrogens,
    enumerate_disorder_candidates,
    rank_candidates,
    repair_all,
)
from .smiles import parse_smiles
from .sources import MofRecord, PaperInfo, RecordStore, match_refcodes

__all__ = [
    "BondPolicy",
    "ComponentRole",
    "ComponentSpec",
    "CrystalStructure",
    "DiagnosisReport",
    "Lattice",
    "LennardJonesModel",
    "MalformedCif",
    "MatchTimeout",
    "ModelFailure",
    "MofRecord",
    "MolecularGraph",
    "PaperInfo",
    "PeriodicGraph",
    "RecordStore",
    "ReferenceGraph",
    "RepairOutcome",
    "Site",
    "SubprocessEnergyModel",
    "UnresolvedName",
    "__version__",
    "build_graph",
    "build_reference_graph",
    "connected_components",
    "coordination_env_test",
    "correct_bonds",
    "correct_hydrogens",
    "diagnose",
    "enumerate_disorder_candidates",
    "find_embeddings",
    "match_refcodes",
    "maximum_disjoint",
    "min_image_distance",
    "parse_cif",
    "parse_smiles",
    "parse_structural_formula",
    "rank_candidates",
    "remove_free_solvent",
    "repair_all",
    "resolve_name",
    "solvent_library",
    "species_scaling_test",
    "subgraph_match_test",
    "write_cif",
]
