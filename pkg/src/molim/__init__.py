"""Molecular index modulation over a diffusive MISO channel.

Monte Carlo simulation of an 8-transmitter uniform circular array around a
partitioned absorbing spherical receiver, with three symbol decoders:
maximum count, sequential maximum likelihood, and a from-scratch CNN.
"""

from .coding import bit_duration, bit_error_rate, bits_to_symbols, symbols_to_bits
from .decoders import (ChannelCoefficients, MleState, estimate_channel,
                       mcd_decode, mle_decode, mle_decode_window, mle_past)
from .diffusion import (AbsorptionEvent, MoleculeState, SampleRecord,
                        brownian_step, normalize_sample, resolve_collisions,
                        simulate_sequence)
from .topology import Topology, TopologyConfig, build_topology, load_config, region_of

__version__ = "0.1.0"

__all__ = [
    "Topology", "TopologyConfig", "build_topology", "load_config", "region_of",
    "AbsorptionEvent", "MoleculeState", "SampleRecord", "brownian_step",
    "normalize_sample", "resolve_collisions", "simulate_sequence",
    "bits_to_symbols", "symbols_to_bits", "bit_error_rate", "bit_duration",
    "ChannelCoefficients", "MleState", "estimate_channel", "mcd_decode",
    "mle_decode", "mle_decode_window", "mle_past",
    "__version__",
]
