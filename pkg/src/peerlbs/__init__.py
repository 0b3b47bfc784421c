"""Pseudonymous, peer-assisted location-based service queries: protocol
library plus a seeded discrete-event simulator for evaluating it."""

__version__ = "0.1.0"
