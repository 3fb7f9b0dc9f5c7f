"""Bagged ensembles of decision trees whose nodes carry boosted regression models."""

from .boosttree import BoostTree, ParameterPool, grow, predict_tree
from .cart import CartTree, fit_cart, predict_cart
from .data import (
    CsvSchema,
    DataError,
    Dataset,
    PreprocessState,
    apply_preprocess,
    fit_preprocess,
    load_concrete,
    load_csv,
    load_seeds,
)
from .forest import Forest, ModelFileError, load_model, predict_forest, save_model, train_forest

__version__ = "0.1.0"

__all__ = [
    "BoostTree", "CartTree", "CsvSchema", "DataError", "Dataset", "Forest",
    "ModelFileError", "ParameterPool", "PreprocessState", "apply_preprocess",
    "fit_cart", "fit_preprocess", "grow", "load_concrete", "load_csv", "load_model",
    "load_seeds", "predict_cart", "predict_forest", "predict_tree", "save_model",
    "train_forest",
]
