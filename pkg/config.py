import os

import numpy as np
from dotenv import load_dotenv

from twd.geometry import DEFAULT_PRECISION_BITS, PrecisionConfig


class Config:
    """Centralized configuration for the command line tools"""

    def __init__(self):
        self.log_level = "INFO"
        self.precision_bits = DEFAULT_PRECISION_BITS
        self.seed = 0
        self.threads = 1
        self.dimension = 2

    @classmethod
    def from_env(cls):
        """Create config from environment variables (a .env file is honoured)"""
        load_dotenv()
        config = cls()
        config.log_level = os.getenv("TWD_LOG_LEVEL", config.log_level)
        config.precision_bits = int(os.getenv("TWD_PRECISION_BITS", str(config.precision_bits)))
        config.seed = int(os.getenv("TWD_SEED", str(config.seed)))
        config.threads = max(1, int(os.getenv("TWD_THREADS", str(config.threads))))
        return config

    @classmethod
    def from_args(cls, args):
        """Create config from parsed command line arguments, falling back to the environment"""
        config = cls.from_env()
        config.log_level = getattr(args, 'log_level', None) or config.log_level
        if getattr(args, 'precision_bits', None) is not None:
            config.precision_bits = args.precision_bits
        if getattr(args, 'seed', None) is not None:
            config.seed = args.seed
        if getattr(args, 'dimension', None) is not None:
            config.dimension = args.dimension
        if getattr(args, 'threads', None) is not None:
            config.threads = max(1, args.threads)
        return config


def create_dependencies(config, dimension=None):
    """Shared collaborators of a run; every subcommand draws randomness from this one generator"""
    d = config.dimension if dimension is None else dimension
    return {
        'precision': PrecisionConfig(d, config.precision_bits),
        'rng': np.random.default_rng(config.seed),
        'workers': config.threads,
    }
