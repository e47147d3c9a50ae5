"""Spectral Galerkin simulation of the stochastic 2D Euler equation on the torus.

Truncated vorticity dynamics with friction and white-in-time forcing, exact
samplers for the enstrophy and energy-enstrophy Gibbs measures, and a
diagnostics suite checking conservation laws, measure invariance and
convergence-to-equilibrium envelopes at desk scale.
"""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    ModeLattice,
    SpectralField,
    build_lattice,
    cached_lattice,
    biot_savart,
    evaluate_on_grid,
    field_to_chart,
    chart_to_field,
    hnorm_sq,
    sobolev_norm,
)
from .rng import RandomSource  # noqa: F401
from .measures import (  # noqa: F401
    CylinderDensity,
    MeasureSpec,
    characteristic_functional,
    sample_cylinder_density,
    sample_energy_enstrophy,
    sample_white_noise,
    truncated_partition_function,
)
from .cylinder import CylinderFunction, Polynomial, mehler_apply  # noqa: F401
from .dynamics import (  # noqa: F401
    CutoffSpec,
    DriftResult,
    IntegratorConfig,
    divergence_check,
    eval_cutoff_drift,
    eval_drift,
    eval_generator,
    step_deterministic,
    step_stochastic,
)
from .nonlinearity import (  # noqa: F401
    ChaosReport,
    KernelSpec,
    TestFunction,
    chaos_statistics,
    eval_kernel,
    kernel_l2_distance,
    pairing_quadrature,
    pairing_spectral,
)
from .observables import (  # noqa: F401
    MarginalHistogram,
    enstrophy,
    energy,
    gibbs_weight,
    infinitesimal_invariance_check,
    kullback_check,
    marginal_chi_squared,
    marginal_relative_entropy,
    renormalized_energy,
    stationarity_test,
    wick_variance,
)
from .runner import RunConfig, run_ensemble  # noqa: F401
