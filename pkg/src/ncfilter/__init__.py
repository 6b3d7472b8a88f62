"""Open quantum systems driven by non-classical light.

Library and CLI for the unconditional and measurement-conditioned
dynamics of a small quantum system coupled to a travelling field in a
vacuum / single-photon combination or a mixture of coherent states:
master equations, photon-counting and quadrature filters, count
statistics, and reproducible trajectory ensembles, all cross-checked
against an independent simulation on the system (x) source space.
"""

__version__ = "0.1.0"

from .envelopes import (  # noqa: F401
    CoherentMixtureField,
    GammaMatrix,
    GaussianEnvelope,
    PhotonComboField,
    TabulatedEnvelope,
    lambda_coupling,
    photon_flux,
)
from .engine import (  # noqa: F401
    EnsembleResult,
    MeasurementRecord,
    TimeGrid,
    TrajectoryResult,
    derive_seed,
    empirical_count_distribution,
    run_ensemble,
    simulate_counting,
    simulate_homodyne,
)
from .hierarchy import (  # noqa: F401
    MatrixFamily,
    expected_count_rate,
    expected_quadrature_rate,
    integrate_deterministic,
    rhs_cascade_hierarchy,
    rhs_coherent_mixture,
    rhs_fock_hierarchy,
)
from .filters import (  # noqa: F401
    FilterState,
    counting_drift,
    counting_intensity,
    counting_jump,
    homodyne_rhs,
    nocount_rhs,
    quadrature_rate,
)
from .operators import (  # noqa: F401
    SystemModel,
    adjoint_lindblad_apply,
    commutator,
    kron,
    lindblad_apply,
    partial_trace_ancilla,
    ancilla_sandwich,
    two_level_decay,
)
from .scenarios import (  # noqa: F401
    PRESETS,
    ScenarioConfig,
    compare_oracle,
    config_hash,
    load_scenario,
    parse_config,
    print_config,
    run_scenario,
    run_trajectories,
)
