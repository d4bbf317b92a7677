"""Cyclone dimensions and derived volumes/areas."""
from dataclasses import dataclass, fields
from math import log, pi, sqrt


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CycloneGeometry:
    """Raw cyclone dimensions in metres (areas in m^2).

    ``w_in`` defaults to ``0.4 * r_c``; ``A_in`` is the inlet area.
    """

    h_t: float
    h_c: float
    h_x: float
    r_c: float
    r_r: float
    r_x: float
    r_d: float
    r_in: float
    A_in: float
    wall_thickness: float = 0.008
    w_in: float = None

    def __post_init__(self):
        if self.w_in is None:
            object.__setattr__(self, "w_in", 0.4 * self.r_c)
        self.validate()

    def validate(self):
        if not 0 < self.r_d < self.r_x < self.r_c < self.r_r < self.r_w:
            raise GeometryError("radii must satisfy 0 < r_d < r_x < r_c < r_r < r_w")
        if not 0 < self.h_c < self.h_t:
            raise GeometryError("need 0 < h_c < h_t")
        # equality is allowed: cyclone 3's vortex finder ends exactly at the cone
        if not 0 < self.h_x <= (self.h_t - self.h_c) * (1 + 1e-12):
            raise GeometryError("vortex finder must end above the cone: 0 < h_x <= h_t - h_c")
        if not self.A_in > 0 or not self.w_in > 0:
            raise GeometryError("inlet area and width must be positive")

    @property
    def r_w(self):
        return self.r_r + self.wall_thickness

    @property
    def l_in(self):
        # inlet slot height from area and width
        return self.A_in / self.w_in

    h_in = l_in

    def scaled(self, s):
        kw = {f.name: getattr(self, f.name) * s for f in fields(self)}
        kw["A_in"] = self.A_in * s * s
        return CycloneGeometry(**kw)


@dataclass(frozen=True)
class DerivedGeometry:
    V_tot: float
    A_c: float
    A_sep: float
    r_2: float
    h_c1: float
    r_eq: float
    h_i: float
    A_x: float
    D_x: float
    D_H: float
    A_d: float
    V_r: float
    V_w: float
    A_r: float
    A_w: float
    d_c: float


def chamber_volume(r_c, r_x, h_t, h_c, h_x):
    return pi * (r_c**2 * (h_t - h_c) + h_c / 3 * (r_c**2 + r_x**2 + r_c * r_x) - r_x**2 * h_x)


def derive(geo):
    """Volumes, areas and characteristic lengths of a cyclone."""
    geo.validate()
    r_c, r_x, r_d = geo.r_c, geo.r_x, geo.r_d
    h_t, h_c, h_x = geo.h_t, geo.h_c, geo.h_x

    # frustum term uses r_x as in the source formulation
    V_tot = chamber_volume(r_c, r_x, h_t, h_c, h_x)
    A_c = (2 * pi * r_c * (h_t - h_c) + pi * (r_c**2 - r_x**2)
           + pi * (r_c + r_d) * sqrt((r_c - r_d) ** 2 + h_c**2))
    h_c1 = h_c / 2
    r_2 = r_c - h_c1 / h_c * (r_c - r_d)
    A_sep = 2 * pi * r_c * (h_t - h_c) + pi * (r_c + r_2) * sqrt((r_c - r_2) ** 2 + h_c1**2)
    r_eq = sqrt(V_tot / (pi * h_t))

    # lining and shell as cylindrical shells on an effective cylinder whose
    # inner lateral area equals A_c
    h_eff = A_c / (2 * pi * r_c)
    r_r, r_w = geo.r_r, geo.r_w
    V_r = pi * (r_r**2 - r_c**2) * h_eff
    V_w = pi * (r_w**2 - r_r**2) * h_eff
    A_r = 2 * pi * r_r * h_eff
    A_w = 2 * pi * r_w * h_eff

    A_d = A_c
    return DerivedGeometry(
        V_tot=V_tot, A_c=A_c, A_sep=A_sep, r_2=r_2, h_c1=h_c1, r_eq=r_eq,
        h_i=h_t - h_x, A_x=pi * r_x**2, D_x=2 * r_x, D_H=4 * V_tot / A_d, A_d=A_d,
        V_r=V_r, V_w=V_w, A_r=A_r, A_w=A_w, d_c=2 * r_c,
    )


def curved_wall_depth(r_i, r_j):
    """Conduction depth ln(r_j / r_i) * r_i of a curved layer, r_i < r_j."""
    if not 0 < r_i <= r_j:
        raise GeometryError("need 0 < r_i <= r_j")
    return log(r_j / r_i) * r_i


# Table of the five preheater cyclones, metres / m^2.
PRESET_DIMENSIONS = {
    "cy1": dict(h_t=18.3, h_c=7.4, h_x=3.5, r_c=3.5, r_r=3.6, r_x=1.9, r_d=0.3, r_in=2.8, A_in=11.0),
    "cy2": dict(h_t=11.4, h_c=7.3, h_x=3.4, r_c=3.4, r_r=3.6, r_x=2.4, r_d=0.5, r_in=2.7, A_in=13.3),
    "cy3": dict(h_t=11.2, h_c=7.8, h_x=3.4, r_c=3.4, r_r=3.6, r_x=2.5, r_d=0.5, r_in=2.7, A_in=13.7),
    "cy4": dict(h_t=12.0, h_c=8.1, h_x=3.5, r_c=3.5, r_r=3.7, r_x=2.6, r_d=0.5, r_in=2.8, A_in=14.8),
    "cy5": dict(h_t=12.0, h_c=8.1, h_x=3.5, r_c=3.5, r_r=3.7, r_x=2.6, r_d=0.5, r_in=2.8, A_in=14.8),
}


def preset_geometry(name):
    try:
        return CycloneGeometry(**PRESET_DIMENSIONS[name])
    except KeyError:
        raise GeometryError(f"unknown cyclone preset {name!r}") from None
