"""Keyword-aware relative spatio-temporal graph network for video QA,
written on a small numpy autodiff core."""
from .errors import ConfigError, DataError, FormatError, KrstError, NumericError
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "FormatError", "KrstError", "NumericError", "Tensor", "__version__"]
