"""Floorplan compliance engine: egress, connectivity, energy and area gates."""

__version__ = "0.1.0"
