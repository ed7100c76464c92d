"""Reflected SDEs, backward stochastic variational inequalities and averaging.

Simulates fast-oscillating reflected forward systems and their backward
companions with subdifferential terms, builds the time-averaged coefficients,
and measures how the two systems approach each other as epsilon -> 0.
"""
__version__ = "0.1.0"

from ._accel import get_backend, set_backend  # noqa: E402
from .backward import (BackwardSolution, RegressionConfig, initial_value_convergence,  # noqa: E402
                       martingale_check, solve)
from .coefficients import (AveragedCoefficients, CoefficientSet, audit_assumptions,  # noqa: E402
                           average_diffusion, average_drift, average_driver, make_model,
                           register_model)
from .domain import (DomainSpec, is_on_boundary, make_ball_domain, make_domain,  # noqa: E402
                     make_halfspace_domain, make_interval_domain)
from .errors import (EllipticityViolation, InvalidArgument, NonAveragingError,  # noqa: E402
                     NumericalFailure, ReflavgError)
from .forward import (PathEnsemble, TimeGrid, path_diagnostics, simulate,  # noqa: E402
                      simulate_averaged, weak_gap)
from .potentials import (ConvexPotential, composite_resolvent,  # noqa: E402
                         graph_monotonicity_certificate, make_potential, moreau_envelope,
                         yosida_gradient)
from .rng import StreamKey, gaussian_increments, mean_stderr  # noqa: E402
