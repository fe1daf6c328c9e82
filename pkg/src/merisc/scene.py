"""Static geometry of the BS / RIS / wall layout and per-step user snapshots.

Global frame: ``z`` points up, the ground is ``z = 0``.  The RIS and its
supporting wall live in a plane through ``origin`` with outward normal
``normal``; inside that plane the tangential axes are ``e1`` (horizontal)
and ``e2`` (up), with ``e1 x e2 = normal``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import constants

C0 = constants.c
EPS0 = constants.epsilon_0
MU0 = constants.mu_0
ETA0 = float(np.sqrt(MU0 / EPS0))


def wavenumber(f0: float) -> float:
    return 2.0 * np.pi * f0 / C0


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero-length direction vector")
    return v / n


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SceneConfig:
    f0: float = 3.5e9
    bs_rows: int = 30
    bs_cols: int = 30
    bs_spacing: Optional[float] = None  # None -> half wavelength
    bs_position: tuple = (-20.0, 20.0, 5.0)
    ris_rows: int = 45
    ris_cols: int = 45
    ris_side: float = 1.93
    wall_width: float = 6.0
    wall_height: float = 7.0
    wall_offset: tuple = (0.0, 0.0)  # wall centre minus RIS centre along (e1, e2)
    origin: tuple = (0.0, 0.0, 5.0)  # RIS center, global
    normal: tuple = (0.0, 1.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (0.0, 0.0, 1.0)
    user_area: tuple = (-60.0, 60.0, 10.0, 90.0)  # x_min, x_max, y_min, y_max
    user_height: float = 1.5
    min_user_separation: float = 0.1
    include_wall: bool = True
    quadrature: int = 1  # 1 -> centroid rule, 2 -> 2x2 sub-sampling per patch


@dataclass(frozen=True)
class SceneGeometry:
    f0: float
    k0: float
    eta0: float
    bs_elements: np.ndarray  # (M, 3)
    polarization: np.ndarray  # (3,)
    origin: np.ndarray
    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    ris_rows: int
    ris_cols: int
    ris_side: float
    wall_size: tuple
    centers: np.ndarray  # (P+Q, 3), RIS patches first (row-major), then wall
    uv: np.ndarray  # (P+Q, 2) in-plane coordinates relative to origin
    sizes: np.ndarray  # (P+Q, 2) patch extents along e1, e2
    user_area: tuple
    user_height: float
    min_user_separation: float
    quadrature: int = 1
    config: Optional[SceneConfig] = field(default=None, compare=False)

    @property
    def M(self) -> int:
        return self.bs_elements.shape[0]

    @property
    def P(self) -> int:
        return self.ris_rows * self.ris_cols

    @property
    def Q(self) -> int:
        return self.centers.shape[0] - self.P

    @property
    def n_patches(self) -> int:
        return self.centers.shape[0]

    @property
    def areas(self) -> np.ndarray:
        return self.sizes[:, 0] * self.sizes[:, 1]

    @property
    def wavelength(self) -> float:
        return 2.0 * np.pi / self.k0

    @property
    def normals(self) -> np.ndarray:
        return np.broadcast_to(self.normal, self.centers.shape)

    def quadrature_nodes(self):
        """Return (positions, weights, patch_index) of the surface quadrature."""
        if self.quadrature == 1:
            return self.centers, self.areas, np.arange(self.n_patches)
        q = self.quadrature
        offs = (np.arange(q) + 0.5) / q - 0.5
        du, dv = np.meshgrid(offs, offs, indexing="ij")
        du, dv = du.ravel(), dv.ravel()
        pos = (self.centers[:, None, :]
               + (du[None, :, None] * self.sizes[:, None, 0:1]) * self.e1
               + (dv[None, :, None] * self.sizes[:, None, 1:2]) * self.e2)
        w = np.repeat(self.areas / q**2, q * q)
        idx = np.repeat(np.arange(self.n_patches), q * q)
        return pos.reshape(-1, 3), w, idx

    def without_wall(self) -> "SceneGeometry":
        P = self.P
        return SceneGeometry(
            f0=self.f0, k0=self.k0, eta0=self.eta0, bs_elements=self.bs_elements,
            polarization=self.polarization, origin=self.origin, normal=self.normal,
            e1=self.e1, e2=self.e2, ris_rows=self.ris_rows, ris_cols=self.ris_cols,
            ris_side=self.ris_side, wall_size=self.wall_size,
            centers=_frozen(self.centers[:P]), uv=_frozen(self.uv[:P]),
            sizes=_frozen(self.sizes[:P]), user_area=self.user_area,
            user_height=self.user_height, min_user_separation=self.min_user_separation,
            quadrature=self.quadrature, config=self.config)


def _bs_array(rows, cols, spacing, center, target, up):
    center = np.asarray(center, float)
    bore = _unit(np.asarray(target, float) - center)
    h = np.cross(up, bore)
    if np.linalg.norm(h) < 1e-9:
        h = np.cross([1.0, 0.0, 0.0], bore)
    h = _unit(h)
    v = np.cross(bore, h)
    i = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    j = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    jj, ii = np.meshgrid(j, i, indexing="ij")
    return center + ii.reshape(-1, 1) * h + jj.reshape(-1, 1) * v


def _wall_patches(a, ris_side, wall_w, wall_h, offset=(0.0, 0.0)):
    """Cells of side ``a`` aligned with the RIS grid, clipped to the wall.

    ``offset`` is the wall centre relative to the RIS centre along (e1, e2).
    """
    half = ris_side / 2.0
    n_ris = int(round(ris_side / a))

    def edges(size, off):
        lo, hi = off - size / 2.0, off + size / 2.0
        n_lo = max(int(np.ceil((-half - lo) / a - 1e-9)), 0)
        n_hi = max(int(np.ceil((hi - half) / a - 1e-9)), 0)
        e = np.concatenate([-half - a * np.arange(n_lo, 0, -1),
                            -half + a * np.arange(n_ris + 1),
                            half + a * np.arange(1, n_hi + 1)])
        return np.clip(e, lo, hi)

    eu = edges(wall_w, offset[0])
    ev = edges(wall_h, offset[1])
    uv, sz = [], []
    for iu in range(len(eu) - 1):
        for iv in range(len(ev) - 1):
            u0, u1, v0, v1 = eu[iu], eu[iu + 1], ev[iv], ev[iv + 1]
            if u1 - u0 <= 1e-12 or v1 - v0 <= 1e-12:
                continue
            uc, vc = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
            if abs(uc) < half and abs(vc) < half:
                continue
            uv.append((uc, vc))
            sz.append((u1 - u0, v1 - v0))
    return np.array(uv).reshape(-1, 2), np.array(sz).reshape(-1, 2)


def build_scene(config: SceneConfig) -> SceneGeometry:
    c = config
    if c.f0 <= 0:
        raise ValueError("f0 must be positive")
    if c.bs_rows < 1 or c.bs_cols < 1:
        raise ValueError("BS array needs at least one element (M >= 1)")
    if c.ris_rows < 1 or c.ris_cols < 1:
        raise ValueError("RIS needs at least one patch")
    if c.ris_rows != c.ris_cols:
        raise ValueError("only square RIS grids are supported")
    if c.ris_side <= 0 or c.wall_width <= 0 or c.wall_height <= 0:
        raise ValueError("surface dimensions must be positive")
    du, dv = (float(x) for x in c.wall_offset)
    if (c.ris_side / 2.0 > c.wall_width / 2.0 - abs(du) + 1e-12
            or c.ris_side / 2.0 > c.wall_height / 2.0 - abs(dv) + 1e-12):
        raise ValueError(f"RIS side {c.ris_side} m does not fit in the "
                         f"{c.wall_width} x {c.wall_height} m wall")
    if c.quadrature not in (1, 2):
        raise ValueError("quadrature must be 1 or 2")
    x0, x1, y0, y1 = c.user_area
    if not (x1 > x0 and y1 > y0):
        raise ValueError("user_area must have positive extent")

    k0 = wavenumber(c.f0)
    lam = 2.0 * np.pi / k0
    spacing = lam / 2.0 if c.bs_spacing is None else float(c.bs_spacing)
    if spacing <= 0:
        raise ValueError("bs_spacing must be positive")

    origin = np.asarray(c.origin, float)
    normal = _unit(c.normal)
    up = _unit(c.up)
    e2 = up - np.dot(up, normal) * normal
    e2 = _unit(e2)
    e1 = np.cross(e2, normal)
    pol = _unit(c.polarization)

    a = c.ris_side / c.ris_rows
    n = c.ris_rows
    g = -c.ris_side / 2.0 + a * (np.arange(n) + 0.5)
    vv, uu = np.meshgrid(g, g, indexing="ij")
    ris_uv = np.column_stack([uu.ravel(), vv.ravel()])
    ris_sz = np.full((n * n, 2), a)
    if c.include_wall:
        w_uv, w_sz = _wall_patches(a, c.ris_side, c.wall_width, c.wall_height, (du, dv))
    else:
        w_uv, w_sz = np.zeros((0, 2)), np.zeros((0, 2))
    uv = np.vstack([ris_uv, w_uv])
    sizes = np.vstack([ris_sz, w_sz])
    centers = origin + uv[:, :1] * e1 + uv[:, 1:] * e2

    bs = _bs_array(c.bs_rows, c.bs_cols, spacing, c.bs_position, origin, up)
    return SceneGeometry(
        f0=float(c.f0), k0=k0, eta0=ETA0, bs_elements=_frozen(bs),
        polarization=_frozen(pol), origin=_frozen(origin), normal=_frozen(normal),
        e1=_frozen(e1), e2=_frozen(e2), ris_rows=n, ris_cols=n,
        ris_side=float(c.ris_side), wall_size=(float(c.wall_width), float(c.wall_height)),
        centers=_frozen(centers), uv=_frozen(uv), sizes=_frozen(sizes),
        user_area=tuple(float(x) for x in c.user_area), user_height=float(c.user_height),
        min_user_separation=float(c.min_user_separation), quadrature=c.quadrature,
        config=c)


@dataclass(frozen=True)
class UserSnapshot:
    c: int
    positions: np.ndarray  # (L, 3)

    @property
    def L(self) -> int:
        return self.positions.shape[0]


def make_snapshot(c: int, positions, scene: Optional[SceneGeometry] = None,
                  area: Optional[Sequence[float]] = None, height: Optional[float] = None,
                  min_separation: Optional[float] = None, tol: float = 1e-9) -> UserSnapshot:
    """Validate user positions and wrap them in a :class:`UserSnapshot`.

    ``positions`` may be ``(L, 2)`` ground coordinates (height is filled in)
    or ``(L, 3)``.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if scene is not None:
        area = scene.user_area if area is None else area
        height = scene.user_height if height is None else height
        min_separation = scene.min_user_separation if min_separation is None else min_separation
    if pos.shape[0] < 1:
        raise ValueError("a snapshot needs at least one user")
    if pos.shape[1] == 2:
        if height is None:
            raise ValueError("2-D positions need a user height")
        pos = np.column_stack([pos, np.full(pos.shape[0], height)])
    if area is not None:
        x0, x1, y0, y1 = area
        inside = ((pos[:, 0] >= x0 - tol) & (pos[:, 0] <= x1 + tol)
                  & (pos[:, 1] >= y0 - tol) & (pos[:, 1] <= y1 + tol))
        if not inside.all():
            raise ValueError(f"step {c}: user outside the service area")
    if height is not None and np.any(np.abs(pos[:, 2] - height) > 1e-6):
        raise ValueError(f"step {c}: user not at the configured height {height} m")
    if min_separation is not None and pos.shape[0] > 1:
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        if d.min() < min_separation:
            raise ValueError(f"step {c}: users closer than {min_separation} m")
    return UserSnapshot(c=int(c), positions=_frozen(pos))
