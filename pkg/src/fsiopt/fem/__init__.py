"""Finite-element assembly on P2/P1 Taylor-Hood meshes."""
