"""Fixed-point emulation of receiver nonlinearity compensation for coherent fiber links."""
from .errors import ConfigurationError, InvalidSampleError
from .signal import DualPolSignal
from .channel import LinkSpec, TxConfig
from .nlc import NlcPlan

__all__ = ["ConfigurationError", "InvalidSampleError", "DualPolSignal", "LinkSpec",
           "TxConfig", "NlcPlan"]
