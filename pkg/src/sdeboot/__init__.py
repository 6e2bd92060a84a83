"""Misspecification-robust weighted block bootstrap for ergodic SDE models."""

__version__ = "0.1.0"
