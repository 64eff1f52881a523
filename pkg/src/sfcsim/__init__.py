"""Distributed SFC provisioning simulator: clustered NFV substrate, per-cluster
DRL agents with a coordinating general agent, two-level path discovery, and a
reproducible training/evaluation CLI."""

__version__ = "0.1.0"
