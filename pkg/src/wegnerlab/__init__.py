"""Exact diagonalization and Monte Carlo checks of the Wegner estimate for
multi-particle Anderson Hamiltonians on rectangular lattice domains."""

from .hamiltonian import (
    AssembledHamiltonian,
    GeneralBounded,
    OperatorTemplate,
    PairPotential,
    PerturbationInfo,
    PotentialField,
    assemble,
    contact_interaction,
    interaction_diagonal,
    kinetic_matrix,
    perturbation_info,
    potential_diagonal,
)
from .lattice import (
    DomainError,
    NonRegularDomainError,
    Rectangle,
    RectangularDomain,
    RegularityInfo,
    classify_regularity,
    index_site,
    normal_form,
    rectangle_sites,
    site_index,
)
from .montecarlo import (
    SweepConfig,
    WegnerReport,
    estimate_expected_count,
    estimate_probability,
    ids_density_estimate,
    scaling_fit,
    sweep,
)
from .randomness import (
    DensitySpec,
    clamp_site,
    density_at,
    sample_potential,
    triangular,
    truncated_normal,
    uniform,
)
from .spectral import (
    Spectrum,
    counting_function,
    eigen_symmetric,
    spectral_distance,
    windowed_trace,
)
from .verify import (
    InapplicableCheck,
    SmoothSwitch,
    chain_check,
    fd_derivative,
    fh_derivative,
    interlacing_check,
    lemma31_check,
    lemma32_oracle,
    smooth_switch,
)

__version__ = "0.1.0"
