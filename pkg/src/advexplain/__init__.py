"""Tree-ensemble botnet detection, exact Shapley explanations and a Shapley-guided evasion attack."""

from ._backend import BACKEND
from .dataset import DEFAULT_FEATURES, FeatureSchema, LabeledDataset

__version__ = "0.1.0"

__all__ = ["BACKEND", "DEFAULT_FEATURES", "FeatureSchema", "LabeledDataset", "__version__"]
