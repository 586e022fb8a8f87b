"""Adaptive model predictive control of a variable-speed pumped-storage plant
for primary frequency control, with fixed-speed and virtual-inertia baselines."""

__version__ = "0.1.0"
