"""Trap-bottom trajectory design for fast atom transport in non-harmonic traps.

The toolkit reverse-engineers the trap trajectory x0(t) from a prescribed
particle path x(t), checks feasibility bounds per trap family, and verifies
the designs by classical integration, thermal-ensemble transport, moment
dynamics, and quantum wave-packet propagation.
"""

__version__ = "0.1.0"

from trapshuttle.trajectory import (
    ReferenceTrajectory,
    OnePointProtocol,
    make_reference,
    eval_derivatives,
    one_point_trajectories,
)
from trapshuttle.traps import (
    UnsupportedFamilyError,
    PowerLaw,
    Harmonic,
    HarmonicCubic,
    HarmonicQuartic,
    Tweezers,
    TransportPlan,
    potential,
    force,
    invert_power_law,
    invert_cubic,
    invert_quartic,
    invert_tweezers,
    design_plan,
    one_point_plan,
    harmonic_frequency,
)
from trapshuttle.dynamics import (
    PhysicalConstants,
    ParticleState,
    integrate,
    residual_energy,
)
from trapshuttle.perturb import (
    PerturbativeSolution,
    EnergyMap,
    correction,
    residual_bracket,
    exact_residual,
    energy_map,
    optimal_u,
)
from trapshuttle.sweep import (
    SweepJob,
    SweepResult,
    CorruptCheckpointError,
    CheckpointMismatchError,
    cell_seed,
    register_task,
)
from trapshuttle.ensemble import (
    EnsembleConfig,
    MomentState,
    MomentHistory,
    PacketSweep,
    SamplingError,
    sample_equilibrium,
    evolve_moments,
    xv_exact,
    packet_cell,
    packet_energy_sweep,
    find_magic_times,
)

from trapshuttle.quantum import (
    Grid,
    Wavepacket,
    PropagationResult,
    ExcitationReport,
    PropagationError,
    ConvergenceError,
    default_grid,
    ground_state,
    eigenbasis,
    propagate,
    transient_excitation,
)

__all__ = [
    "ReferenceTrajectory",
    "OnePointProtocol",
    "make_reference",
    "eval_derivatives",
    "one_point_trajectories",
    "PowerLaw",
    "Harmonic",
    "HarmonicCubic",
    "HarmonicQuartic",
    "Tweezers",
    "TransportPlan",
    "potential",
    "force",
    "invert_power_law",
    "invert_cubic",
    "invert_quartic",
    "invert_tweezers",
    "design_plan",
    "one_point_plan",
    "PhysicalConstants",
    "ParticleState",
    "integrate",
    "residual_energy",
    "PerturbativeSolution",
    "EnergyMap",
    "correction",
    "residual_bracket",
    "exact_residual",
    "energy_map",
    "optimal_u",
    "EnsembleConfig",
    "MomentState",
    "MomentHistory",
    "PacketSweep",
    "SamplingError",
    "UnsupportedFamilyError",
    "harmonic_frequency",
    "sample_equilibrium",
    "evolve_moments",
    "xv_exact",
    "packet_cell",
    "packet_energy_sweep",
    "find_magic_times",
    "SweepJob",
    "SweepResult",
    "CorruptCheckpointError",
    "CheckpointMismatchError",
    "cell_seed",
    "register_task",
    "Grid",
    "Wavepacket",
    "PropagationResult",
    "ExcitationReport",
    "PropagationError",
    "ConvergenceError",
    "default_grid",
    "ground_state",
    "eigenbasis",
    "propagate",
    "transient_excitation",
    "__version__",
]
