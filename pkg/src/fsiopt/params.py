"""Material and mesh-motion parameters."""
from __future__ import annotations

from dataclasses import dataclass


def lame_from_young(E, nu):
    """Plane-strain Lame constants ``(lambda, mu)`` from Young's modulus and Poisson ratio."""
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


@dataclass(frozen=True)
class MaterialParams:
    rho_f: float
    mu_f: float
    rho_s: float
    mu_s: float
    lam_s: float
    law: str = "linear"          # "linear" or "stvk"
    lam_m: float = lame_from_young(1.0, 0.3)[0]
    mu_m: float = lame_from_young(1.0, 0.3)[1]

    def __post_init__(self):
        if min(self.rho_f, self.mu_f, self.rho_s, self.mu_s) <= 0:
            raise ValueError("densities, fluid viscosity and solid shear modulus must be positive")
        if self.law not in ("linear", "stvk"):
            raise ValueError(f"unknown solid law {self.law!r}")
        if self.lam_m + self.mu_m <= 0:
            raise ValueError("mesh-motion parameters must satisfy lam_m + mu_m > 0")

    @classmethod
    def from_young(cls, rho_f, mu_f, rho_s, E, nu, law="linear", **kw):
        lam, mu = lame_from_young(E, nu)
        return cls(rho_f=rho_f, mu_f=mu_f, rho_s=rho_s, mu_s=mu, lam_s=lam, law=law, **kw)
