"""Data-driven tuning of fractional-order controllers from one closed-loop experiment."""

__version__ = "0.1.0"

from .discretize import c2d_f2i, tustin
from .errors import *  # noqa: F401,F403
from .frac import (FracTF, OustaloupSettings, ReferenceModelSpec, bitf, build_reference_model,
                   f2i, oustaloup, reference_open_loop)
from .freq import (bode, estimated_loop_margins, flatness_metric, gain_crossover, loop_margins,
                   phase_margin, spectral_loss_check)
from .poly_tf import (DiscreteTF, Polynomial, RationalTF, poles, tf_add, tf_eval,
                      tf_feedback_unity, tf_inverse, tf_mul, zeros)
from .sim import (ExperimentData, Signal, closed_loop_sim, closed_loop_tf, fictitious_reference,
                  impulse_response, lfilter, step_metrics, toeplitz_mul, toeplitz_solve)
from .tuning import (ControllerSpec, FritLoss, PsoSettings, SearchBounds, TuneResult,
                     build_controller, gain_robustness_report, loss_J, pso_minimize,
                     stability_screen, tune_controller)
