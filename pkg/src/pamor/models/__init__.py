"""Benchmark model generators and model/result serialization."""

from pamor.models.msd import MsdConfig, generate_msd
from pamor.models.poro import PoroConfig, generate_poro
from pamor.models.random import random_contractive, random_passive, random_stable

__all__ = [
    'MsdConfig',
    'PoroConfig',
    'generate_msd',
    'generate_poro',
    'random_contractive',
    'random_passive',
    'random_stable',
]
