"""Eco-driving lab: corridor microsimulation and hybrid-action RL control."""

__version__ = "0.1.0"
