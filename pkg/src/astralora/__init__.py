"""Training networks with black-box linear layers via low-rank surrogates and zeroth-order updates."""

from .hybridnet import HybridNode, Network
from .numlin import RngStream
from .photonics import BlackBoxLayer, make_layer, materialize
from .surrogate import SurrogateModel, init_oracle, init_sketch, ipsi_update
from .zograd import ZoConfig, estimate_batch, estimate_gradient

__all__ = [
    "BlackBoxLayer", "HybridNode", "Network", "RngStream", "SurrogateModel", "ZoConfig",
    "estimate_batch", "estimate_gradient", "init_oracle", "init_sketch", "ipsi_update",
    "make_layer", "materialize",
]
__version__ = "0.1.0"
