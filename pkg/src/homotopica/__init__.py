"""Homotopic group ICA and the baseline group ICA it is compared with."""

from .core import WhiteningResult, center_rows, pca_whiten, standardize_rows, svd_thin
from .evaluate import match_components, run_benchmark, theorem_check, voxel_mean_difference
from .fastica import CONTRASTS, FastICAOptions, fastica_fit, negentropy_estimate, symmetric_decorrelate
from .group import GroupDecomposition, back_reconstruct, gica_fit
from .hgica import (HemispherePair, HomotopyReport, Volume4D, hgica_fit, homotopy_group,
                    homotopy_report, homotopy_subject, split_hemispheres)
from .simgen import ScenarioSpec, make_case, make_image_sources, make_toy

__version__ = "0.1.0"
