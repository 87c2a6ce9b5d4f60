"""Simulation and Monte Carlo verification of growth-fragmentation cell systems.

Modules
-------
levy        jump measures, SNLP characteristics, Laplace exponent / cumulant, path sampling
switching   switching transform of SNLP jumps and the same-cumulant check
lamperti    Lamperti time change producing self-similar cell paths
bifurcator  bifurcators and the coupled bivariate cell system
cellsystem  eps-truncated cell systems, snapshots and functionals
bblp        binary branching Lévy processes and their truncations
verify      experiments returning pass/fail reports
cli         command-line entry point
"""
__version__ = "0.1.0"

from .bblp import (
    BblpCharacteristics,
    ParticleSystem,
    bblp_cumulant,
    gf_to_bblp_characteristics,
    simulate_bblp,
    truncate_system,
)
from .bifurcator import (
    BifurcatorPath,
    CoupledSystem,
    PreconditionError,
    build_homogeneous_bifurcator,
    build_self_similar_bifurcator,
    simulate_coupled_system,
    switching_time_rate,
)
from .cellsystem import (
    CellModel,
    CellTree,
    PowerExponential,
    ResourceLimits,
    Snapshot,
    excessive_sample,
    q_mass,
    simulate_cell_system,
    snapshot,
    time_integrated_mass,
)
from .lamperti import CellPath, self_similar_path, time_change
from .levy import (
    ConfigurationError,
    JumpMeasure,
    PathSkeleton,
    SnlpCharacteristics,
    cumulant,
    laplace_exponent,
    pushforward_bar,
    reflect_jump,
    sample_snlp_path,
)
from .rng import RandomStream
from .switching import (
    SwitchProbability,
    apply_switching,
    canonical_switch_probability,
    same_kappa_characteristics,
    switching_characteristics,
    validate_switch_probability,
)
