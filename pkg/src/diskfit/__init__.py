"""Closed-form gradient circle fitting, EM annulus fitting and a synthetic benchmark."""

from .circlefit import (
    CircleFit,
    EdgePolarity,
    FitReport,
    fit_closed_form,
    fit_geometric_iterative,
    fit_kasa,
    fit_warm_started,
    geometric_loglik,
    gradient_loglik,
    gradient_penalty,
)
from .empupil import MixtureParams, e_step, fit_pupil_em, init_params, m_step, observed_loglik
from .errors import DiskFitError
from .imagepipe import (
    EdgePointSet,
    GradientField,
    GrayImage,
    KernelConfig,
    extract_edge_points,
    gradient_field,
    image_to_points,
    otsu_threshold,
)
from .pgm import read_pgm, write_pgm
from .synthbench import (
    BenchReport,
    SynthAnnulusConfig,
    SynthDiskConfig,
    render_annulus,
    render_disk,
    run_benchmark,
)

__version__ = "0.1.0"
