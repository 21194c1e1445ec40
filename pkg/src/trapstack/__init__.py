"""Simulation and design tools for a coupled Penning-trap stack.

Sympathetic cooling and quantum-logic spin detection of single (anti)protons
with a co-trapped, laser-cooled 9Be+ ion.
"""

__version__ = "0.1.0"
