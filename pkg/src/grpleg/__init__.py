"""Swing-leg control transfer: a three-phase swing-leg controller on a planar
double-pendulum leg, and the modular generator/responsibility-predictor (GRP)
model that learns it online from controller demonstrations."""

__version__ = "0.1.0"
