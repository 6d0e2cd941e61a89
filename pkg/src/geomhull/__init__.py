"""Executable hull geometry: membership oracles with certificates,
sign-balancing decompositions, shattering chains over cube vertices, and
randomized near-spherical projections, each paired with a verifier.
"""

__version__ = "0.1.0"
