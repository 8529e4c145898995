"""Ancilla-assisted quench tomography.

A system is coupled to ancillas in a known state, the joint system evolves
under a known quench, and only the computational basis is read out.  The
linear map from system operators to outcome probabilities is built exactly,
inverted with a frame chosen to reduce variance, and applied to snapshots.
"""

__version__ = "0.1.0"
