"""Test package for blockfw."""
