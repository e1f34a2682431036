"""Volterra-convolution algebra for convolutional networks."""
from .algebra import (combine_22, combine_nm, composed_geometry, multinomial,
                      term_count, verify_property)
from .conv import ConvGeometry, VolterraOperator, conv1, conv_order_n, volterra_apply
from .kernels import backend
from .netconv import (activation_taylor, conv_act_conv, load_network,
                      network_to_volterra)
from .outer import oconv_diag, outer_conv, outer_conv_marginal

__version__ = "0.1.0"

__all__ = [
    "ConvGeometry", "VolterraOperator", "activation_taylor", "backend",
    "combine_22", "combine_nm", "composed_geometry", "conv1", "conv_act_conv",
    "conv_order_n", "load_network", "multinomial", "network_to_volterra",
    "oconv_diag", "outer_conv", "outer_conv_marginal", "term_count",
    "verify_property", "volterra_apply",
]
