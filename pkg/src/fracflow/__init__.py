"""Rigid-fragment 3D reassembly: flow matching on SE(3) with fracture-aware point features."""

__version__ = "0.1.0"
