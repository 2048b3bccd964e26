"""
HomodyneQKD — Random Streams
One seed fans out into independent, single-owner streams per session.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class SessionStreams:
    """Independent generators for every random choice of a session."""
    alice_symbols: np.random.Generator
    channel: np.random.Generator
    bob_bases: np.random.Generator
    bob_noise: np.random.Generator
    alice_sample: np.random.Generator


def session_streams(seed: int) -> SessionStreams:
    children = np.random.SeedSequence(seed).spawn(5)
    return SessionStreams(*(np.random.default_rng(child) for child in children))


def point_seed(base_seed: int, point_index: int) -> int:
    """Seed of sweep point `point_index`: base_seed + point_index."""
    return base_seed + point_index
