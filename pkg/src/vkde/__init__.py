"""Variable kernel density estimation with matrix-valued bandwidth selection.

The package implements the sample-point estimator with per-sample bandwidth
matrices, a family of bandwidth selection rules (fixed, power-law, univariate
and multivariate Parzen, and the invariance-axiom rule driven by the
adaptation function), the self-consistent bandwidth fixed-point iteration,
and a seeded evaluation harness (ISE/MISE benchmarks, invariance conformance
reports).
"""

from .adaptation import AdaptationConfig, AdaptationResult, mu_field, mu_fixed_point
from .data_io import (
    QuakeFilter,
    load_quakes,
    load_samples,
    sample_banana,
    sample_gauss_mix,
    save_samples,
)
from .density import (
    AffineImageDensity,
    BananaDensity,
    DensityAccess,
    GaussianMixture,
    KernelSpec,
    SampleSet,
    VkdeEstimate,
    banana_density,
    demo_mixture_1d,
    mm_delta4,
    mm_eval,
    mm_gradient,
    mm_hessian,
)
from .evaluation import (
    BenchmarkReport,
    QuadratureGrid,
    derivative_ise,
    invariance_report,
    ise,
    mise_mc,
    optimize_constant,
    run_benchmark,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DomainError,
    GridCoverageError,
    ParseError,
)
from .fixed_point import FpiTrace, iterate_bandwidths, self_consistency_residual, silverman_init
from .gauss import (
    ConvolutionIntermediates,
    GaussianComponent,
    gauss_eval,
    gradhess_conv_sq,
    product_conv_sq,
    sqrt_spd,
)
from .selectors import (
    Axiomatic,
    FixedBandwidth,
    GAUSSIAN_CK,
    ParzenMultivariate,
    ParzenUnivariate,
    PowerLaw,
    gaussian_r_constant,
    kernel_constant_ck,
    select_axiomatic,
    select_bandwidth,
    select_parzen_1d,
    select_parzen_multi,
    select_power_law,
)

__version__ = "0.1.0"
