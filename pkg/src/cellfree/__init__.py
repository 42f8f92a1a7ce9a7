"""Uplink cell-free network lab: channel generation, SINR assembly, closed-form
outage analysis, AP clustering, baseline beamforming solvers, a hybrid
DDPG/DDQN agent and a seeded Monte-Carlo engine."""

__version__ = "0.1.0"
