"""Distribution and quantile treatment effects on the treated from link-transformed
difference-in-differences."""

from .aggregate import (WeightScheme, equal_group_weights, equal_weights, event_study_weights,
                        explicit_weights, weighted_df)
from .data import Design, DesignInfo, Observation, PanelDataset, cell_stats, detect_design, load_csv
from .ecdf import Grid, StepDF, build_grid, group_period_ecdf
from .effects import EffectCurve, adtt, dtt, left_inverse, minkowski_diff, qtt
from .errors import (ConfigError, DataError, DegenerateBootstrapError, DistDiDError, DomainError,
                     IdentificationError, NumericalError)
from .estimator import Estimator, EstimatorSpec
from .identify import (LinkRegime, Theta, counterfactual_nsmp, counterfactual_staggered,
                       counterfactual_two_period, index_coeffs)
from .inference import BootstrapPlan, UniformBand, band_pipeline, sup_t_test, uniform_band
from .links import Link

__version__ = "0.1.0"
