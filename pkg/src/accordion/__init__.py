"""Genetic-algorithm training of CNN weights with the Accordion chromosome encoding."""
from .errors import CodecError, ConfigError, ContractError, FormatError, StructuralError
from .genome import Chromosome, Granularity, decode, encode, refold, section_lengths
from .nn import Network, NetworkSpec, get_architecture, glorot_init, network_forward
from .operators import (build_fitness_table, crossover, mutate, mutation_target_count,
                        roulette_select, rng_stream)
from .schemes import Scheme, SchemeConfig, run

__all__ = [
    "CodecError", "ConfigError", "ContractError", "FormatError", "StructuralError",
    "Chromosome", "Granularity", "decode", "encode", "refold", "section_lengths",
    "Network", "NetworkSpec", "get_architecture", "glorot_init", "network_forward",
    "build_fitness_table", "crossover", "mutate", "mutation_target_count", "roulette_select",
    "rng_stream", "Scheme", "SchemeConfig", "run",
]
__version__ = "0.1.0"
