"""Image feature extraction with stacked TSK fuzzy-rule layers and block histograms."""
from ._backend import backend, set_backend
from .antecedent import FuzzyAntecedent, firing_levels, kernel_widths, lift, var_part
from .classifier import LinearModel, accuracy, fit_svm, predict
from .consequent import ProjectionBank, center_columns, covariance, project, top_eigs
from .encoding import HistogramConfig, binarize, block_histograms, encode, fuse_integer
from .errors import FormatError, UnsupportedVersionError
from .imagery import (CorruptionSpec, ImageStack, LabeledImageSet, corrupt, load_idx,
                      load_pgm_dir, stratified_split)
from .patching import FeatureImage, PatchMatrix, reassemble, vectorize
from .stack import LayerConfig, LayerModel, TrainedModel, fit, load, save, transform

__version__ = "0.1.0"
