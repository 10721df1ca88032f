"""Deterministic discrete-event network simulator and run auditor."""

from freshnet.sim.engine import FaultSpec, SimConfig, Simulation, Topology, run
from freshnet.sim.audit import audit

__all__ = ["FaultSpec", "SimConfig", "Simulation", "Topology", "audit", "run"]
