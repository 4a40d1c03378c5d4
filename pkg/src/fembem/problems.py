"""Model problems on the L-shaped domain."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mesh import LSHAPE_ROTATION, LSHAPE_SIDE, lshape_vertices
from .operators import IDENTITY, ConfigurationError, MaterialTensor


def corner_singular(x: np.ndarray) -> np.ndarray:
    """u = r^(2/3) cos(2 phi / 3) with phi = atan2(y, x)."""
    x = np.atleast_2d(x)
    r = np.hypot(x[:, 0], x[:, 1])
    phi = np.arctan2(x[:, 1], x[:, 0])
    return r ** (2.0 / 3.0) * np.cos(2.0 * phi / 3.0)


def corner_singular_grad(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    r = np.hypot(x[:, 0], x[:, 1])
    phi = np.arctan2(x[:, 1], x[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        ur = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos(2.0 * phi / 3.0)
        uphi_r = -(2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin(2.0 * phi / 3.0)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([ur * c - uphi_r * s, ur * s + uphi_r * c], axis=1)


POLE = np.array([0.125, 0.0])


def exterior_dipole(x: np.ndarray, pole=POLE) -> np.ndarray:
    """u_ext = (x + y - 0.125) / (10 ((x - p1)^2 + (y - p2)^2)), p = pole."""
    x = np.atleast_2d(x)
    dx, dy = x[:, 0] - pole[0], x[:, 1] - pole[1]
    return 0.1 * (x[:, 0] + x[:, 1] - 0.125) / (dx * dx + dy * dy)


def exterior_dipole_grad(x: np.ndarray, pole=POLE) -> np.ndarray:
    x = np.atleast_2d(x)
    dx, dy = x[:, 0] - pole[0], x[:, 1] - pole[1]
    r2 = dx * dx + dy * dy
    num = x[:, 0] + x[:, 1] - 0.125
    gx = 0.1 * (r2 - 2.0 * dx * num) / r2**2
    gy = 0.1 * (r2 - 2.0 * dy * num) / r2**2
    return np.stack([gx, gy], axis=1)


def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd ray casting; points on edges are reported outside."""
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc == x:
                return False
            if xc > x:
                inside = not inside
    return inside


@dataclass(frozen=True)
class ProblemData:
    """Transmission data derived from exact interior/exterior solutions.

    ``u0 = (u - u_ext)|_Gamma`` and ``phi0 = (A grad u - grad u_ext).n``.
    """

    name: str
    u: Callable
    grad_u: Callable
    u_ext: Optional[Callable] = None
    grad_u_ext: Optional[Callable] = None
    f: Optional[Callable] = None
    material: MaterialTensor = IDENTITY
    singular_points: tuple = ((0.0, 0.0),)
    meta: dict = field(default_factory=dict)

    def u0(self, x):
        v = self.u(x)
        return v - self.u_ext(x) if self.u_ext is not None else v

    def phi0(self, x, normal):
        Agu = np.einsum("kab,kb->ka", self.material(x), self.grad_u(x))
        if self.grad_u_ext is not None:
            Agu = Agu - self.grad_u_ext(x)
        return Agu @ np.asarray(normal)

    def g(self, x):
        return self.u(x)

    def phi_exact(self, x, normal):
        """Interior normal derivative (the weakly-singular solution)."""
        return self.grad_u(x) @ np.asarray(normal)


def problem_weaksing() -> ProblemData:
    return ProblemData("weaksing", corner_singular, corner_singular_grad)


def problem_transmission(side: float = LSHAPE_SIDE, rotation: float = LSHAPE_ROTATION) -> ProblemData:
    poly = lshape_vertices(side, rotation)
    if not point_in_polygon(POLE, poly):
        raise ConfigurationError("pole of u_ext lies outside the domain")
    return ProblemData(
        "transmission",
        corner_singular,
        corner_singular_grad,
        exterior_dipole,
        exterior_dipole_grad,
        None,
        IDENTITY,
        meta={"pole": tuple(POLE)},
    )
