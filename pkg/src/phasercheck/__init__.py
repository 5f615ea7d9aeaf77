"""Reachability checker for phaser-synchronized parallel programs."""

__version__ = "0.1.0"
