"""Newmark and BDF coefficient machinery and the discrete ALE velocity.

Both schemes are written in affine form in the new unknown:
``D d = alpha_v d + b_v``, ``D^2 d = alpha_a d + b_a`` and ``D u = alpha u + b``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeScheme:
    dt: float
    gamma: float = 0.5
    beta: float = 0.25
    bdf_order: int = 2
    first_gamma: float = 1.0
    first_beta: float = 0.5
    ale_velocity: str = "bdf"      # "bdf" or "newmark"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if self.bdf_order not in (1, 2):
            raise ValueError("BDF order must be 1 or 2")
        if self.ale_velocity not in ("bdf", "newmark"):
            raise ValueError(f"unknown ALE velocity mode {self.ale_velocity!r}")
        if not (2 * self.beta >= self.gamma >= 0.5):
            warnings.warn(f"Newmark parameters gamma={self.gamma}, beta={self.beta} are not "
                          "unconditionally stable", stacklevel=2)

    def newmark_parameters(self, k):
        return (self.first_gamma, self.first_beta) if k == 0 else (self.gamma, self.beta)


def newmark_affine(scheme: TimeScheme, k, d, v, a):
    """Affine coefficients of the Newmark velocity and acceleration at step ``k+1``.

    Returns ``(alpha_v, b_v, alpha_a, b_a)``.
    """
    gamma, beta = scheme.newmark_parameters(k)
    dt = scheme.dt
    alpha_a = 1.0 / (beta * dt * dt)
    b_a = -alpha_a * (np.asarray(d) + dt * np.asarray(v)) - (1 - 2 * beta) / (2 * beta) * np.asarray(a)
    alpha_v = gamma / (beta * dt)
    b_v = np.asarray(v) + dt * (1 - gamma) * np.asarray(a) + gamma * dt * b_a
    return alpha_v, b_v, alpha_a, b_a


def bdf_affine(scheme: TimeScheme, k, u_k, u_km1=None):
    """``(alpha, b)`` of the BDF derivative at step ``k+1``; BDF2 starts with one BDF1 step."""
    dt = scheme.dt
    if scheme.bdf_order == 1 or k == 0 or u_km1 is None:
        return 1.0 / dt, -np.asarray(u_k) / dt
    return 1.5 / dt, (-4.0 * np.asarray(u_k) + np.asarray(u_km1)) / (2 * dt)


def ale_velocity(W, trace_velocity):
    """Mesh velocity ``W * (interface velocity)``."""
    if W is None:
        return None
    return W @ np.asarray(trace_velocity)
