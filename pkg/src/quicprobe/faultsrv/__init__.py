"""Fault-injecting reference server: the desk-scale oracle for the suite."""

from .faults import FAULT_BEHAVIOURS, FAULT_EXPECTATIONS, FAULT_NAMES, FaultSpec
from .server import FaultServer, ServerConfig, default_body, default_transport_parameters, serve

__all__ = [
    "FAULT_BEHAVIOURS",
    "FAULT_EXPECTATIONS",
    "FAULT_NAMES",
    "FaultServer",
    "FaultSpec",
    "ServerConfig",
    "default_body",
    "default_transport_parameters",
    "serve",
]
