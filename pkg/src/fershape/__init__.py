"""Fourier shape descriptors for landmark-based facial expression recognition."""

from .contour import EfdCoefficients, efd_coefficients, efd_reconstruct, harmonic_spectrum
from .errors import FershapeError
from .evaluation import confusion, cross_validate, evaluate, grid_search, make_folds
from .geometry import Contour, LandmarkSet, fit_ellipse, parse_landmark_file
from .labels import CLASSES
from .pipeline import ExtractionConfig, build_feature_matrix, extract_features
from .region import BinaryMask, gfd, polar_ft, rasterize_region
from .regions import RegionMap, default_region_map
from .svm import load_model, ova_predict, ova_train, save_model, smo_train

__version__ = "0.1.0"
