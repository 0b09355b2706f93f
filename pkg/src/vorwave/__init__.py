"""Periodic traveling water waves with constant vorticity via a conformal spectral formulation."""
