"""Boundary data of Schrödinger-type operators on an interval and a disc.

Set ``IPEQ_THREADS`` before import to cap BLAS and OpenMP threads.
"""

import os

__version__ = "0.1.0"

if os.environ.get("IPEQ_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = os.environ["IPEQ_THREADS"]

from .errors import *  # noqa: E402,F401,F403
from .fields import Field, as_field  # noqa: E402
from .operator_core import (  # noqa: E402
    DiscretizedOperator,
    GeometryModel,
    GeometryWeights,
    boundary_flux,
    build_operator,
    eigendecompose,
    eigenvalues,
    geometry_weights,
)
from .spectral_data import BoundarySpectralData, bsd_equivalent, compute_bsd  # noqa: E402
from .elliptic_dtn import (  # noqa: E402
    DtnSample,
    bsd_from_dtn,
    dtn_derivative_from_bsd,
    dtn_direct,
    dtn_from_bsd,
    dtn_sampler,
    locate_poles,
    residue_kernel,
)
from .time_domain import (  # noqa: E402
    BoundarySource,
    Monomial,
    PolynomialBump,
    ResponseKernel,
    delay_residual,
    evolve,
    response_direct,
    response_from_dtn,
)
from .energy_flux import (  # noqa: E402
    FluxForm,
    energy,
    extract_modes,
    flux,
    flux_series,
    mass,
    mass_at_infinity,
    polarize,
    shifted_flux,
)
from .symbol_calculus import asymptotic_dtn_apply, estimate_rho_H, symbol_coefficients  # noqa: E402
from .finite_time_forms import FiniteTimeForm, bt_from_flux, flux_oracle, form_BT, form_PiT  # noqa: E402
from .gauge_transform import (  # noqa: E402
    GaugePair,
    apply_gauge,
    boundary_shift,
    build_conductivity_operator,
    dtn_gauge_residual,
)
from .persistence import operator_from_spec  # noqa: E402
from .verification import run_suite  # noqa: E402
