"""Surface-scattering forward model of the RIS and its supporting wall.

The incident field of each BS element is the scalar free-space kernel
``exp(-j k0 d) / (4 pi d)`` along the BS polarization; the magnetic field
follows from the local plane-wave relation ``H = (r_hat x E) / eta0``.
Sheet currents follow the sheet transition model without the tangential
gradient terms (piecewise-constant susceptibility per patch), and the
scattered field is the Fraunhofer surface integral evaluated with a
one-point (or 2x2) rule per patch.  The scalar channel is the co-polar
(``polarization``) component of the scattered field.

Susceptibility components are stored in the surface frame ``(e1, e2, n)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .scene import EPS0, ETA0, MU0, SceneConfig, SceneGeometry, build_scene, wavenumber

# ---------------------------------------------------------------------------
# susceptibility tables
# ---------------------------------------------------------------------------

WALL_EPS_R = 5.24
WALL_SIGMA = 0.123  # S/m
WALL_THICKNESS = 0.2  # m


@dataclass(frozen=True)
class SusceptibilityTable:
    """Per-state diagonal surface susceptibilities (metres) plus the wall's."""
    bits: int
    ke: np.ndarray  # (2**bits, 3) complex
    kh: np.ndarray  # (2**bits, 3) complex
    wall_ke: np.ndarray  # (3,) complex
    wall_kh: np.ndarray  # (3,) complex
    provenance: str = ""

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("need at least one bit per meta-atom")
        n = 2 ** self.bits
        for name in ("ke", "kh"):
            a = np.asarray(getattr(self, name), dtype=complex)
            if a.shape != (n, 3):
                raise ValueError(f"{name} must have shape ({n}, 3), got {a.shape}")
            object.__setattr__(self, name, a)
        for name in ("wall_ke", "wall_kh"):
            a = np.asarray(getattr(self, name), dtype=complex).reshape(3)
            object.__setattr__(self, name, a)

    @property
    def num_states(self) -> int:
        return 2 ** self.bits

    def with_all_states_as_wall(self) -> "SusceptibilityTable":
        n = self.num_states
        return SusceptibilityTable(self.bits, np.tile(self.wall_ke, (n, 1)),
                                   np.tile(self.wall_kh, (n, 1)), self.wall_ke,
                                   self.wall_kh, self.provenance + " [all states = wall]")

    def zeroed(self) -> "SusceptibilityTable":
        n = self.num_states
        z = np.zeros((n, 3), complex)
        return SusceptibilityTable(self.bits, z, z, np.zeros(3), np.zeros(3), "transparent")


def reflection_to_susceptibility(r: complex, k0: float):
    """Tangential (Ke, Kh) giving normal-incidence reflection ``r``.

    A sheet with ``Ke_t = j r / k0`` and ``Kh_t = -j r / k0`` radiates an
    equivalent current ``2 r E0`` towards the specular direction, i.e. the
    field of a plane wave reflected with coefficient ``r``.
    """
    ke = np.array([1j * r / k0, 1j * r / k0, 0.0], dtype=complex)
    kh = np.array([-1j * r / k0, -1j * r / k0, 0.0], dtype=complex)
    return ke, kh


def slab_reflection(f0: float, eps_r: float = WALL_EPS_R, sigma: float = WALL_SIGMA,
                    thickness: float = WALL_THICKNESS) -> complex:
    """Normal-incidence reflection coefficient of a lossy dielectric slab in air."""
    w = 2.0 * np.pi * f0
    k0 = wavenumber(f0)
    n = np.sqrt(eps_r - 1j * sigma / (w * EPS0))
    if n.imag > 0:
        n = np.conj(n)
    g = (1.0 - n) / (1.0 + n)
    ph = np.exp(-2j * k0 * n * thickness)
    return complex(g * (1.0 - ph) / (1.0 - g * g * ph))


def state_phases(bits: int, phase_law: Union[str, Sequence[float]] = "uniform") -> np.ndarray:
    """Target reflection phases (rad) of the ``2**bits`` states."""
    n = 2 ** bits
    if isinstance(phase_law, str):
        if phase_law != "uniform":
            raise ValueError(f"unknown phase law {phase_law!r}")
        return 2.0 * np.pi * np.arange(n) / n
    ph = np.deg2rad(np.asarray(phase_law, dtype=float))
    if ph.shape != (n,):
        raise ValueError(f"phase law needs {n} phases in degrees")
    return ph


def calibrate_state_table(bits: int, amplitude: float = 0.9,
                          phase_law: Union[str, Sequence[float]] = "uniform",
                          f0: float = 3.5e9, wall_eps_r: float = WALL_EPS_R,
                          wall_sigma: float = WALL_SIGMA,
                          wall_thickness: float = WALL_THICKNESS) -> SusceptibilityTable:
    if not 1 <= bits <= 8:
        raise ValueError("bits must be in 1..8")
    if not 0 < amplitude <= 1:
        raise ValueError("amplitude must be in (0, 1] (passive surface)")
    k0 = wavenumber(f0)
    ph = state_phases(bits, phase_law)
    ke = np.empty((len(ph), 3), complex)
    kh = np.empty((len(ph), 3), complex)
    for i, p in enumerate(ph):
        ke[i], kh[i] = reflection_to_susceptibility(amplitude * np.exp(1j * p), k0)
    r_wall = slab_reflection(f0, wall_eps_r, wall_sigma, wall_thickness)
    wke, wkh = reflection_to_susceptibility(r_wall, k0)
    prov = (f"calibrated: bits={bits} amplitude={amplitude} phase_law={phase_law} "
            f"f0={f0:g}Hz; wall slab eps_r={wall_eps_r} sigma={wall_sigma}S/m "
            f"t={wall_thickness}m")
    return SusceptibilityTable(bits, ke, kh, wke, wkh, prov)


_TABLE_COLS = ("Ke_x", "Ke_y", "Ke_z", "Kh_x", "Kh_y", "Kh_z")


def save_table(table: SusceptibilityTable, path) -> None:
    """Write the table as whitespace-separated text.

    One row per state: ``index`` then Re/Im of Ke_x, Ke_y, Ke_z, Kh_x, Kh_y,
    Kh_z (metres, surface frame).  The wall row uses the index ``wall``.
    """
    cols = " ".join(f"{c}_re {c}_im" for c in _TABLE_COLS)
    lines = [f"# bits: {table.bits}",
             f"# provenance: {table.provenance}",
             f"# index {cols}"]

    def row(label, ke, kh):
        vals = np.concatenate([ke, kh])
        nums = " ".join(f"{v.real:.17e} {v.imag:.17e}" for v in vals)
        return f"{label} {nums}"

    for s in range(table.num_states):
        lines.append(row(str(s + 1), table.ke[s], table.kh[s]))
    lines.append(row("wall", table.wall_ke, table.wall_kh))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_table(path) -> SusceptibilityTable:
    bits, prov = None, ""
    rows, wall = {}, None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*bits:\s*(\d+)", line)
                if m:
                    bits = int(m.group(1))
                m = re.match(r"#\s*provenance:\s*(.*)", line)
                if m:
                    prov = m.group(1)
                continue
            parts = line.split()
            if len(parts) != 13:
                raise ValueError(f"{path}:{lineno}: expected 13 fields, got {len(parts)}")
            vals = np.array(parts[1:], dtype=float)
            c = vals[0::2] + 1j * vals[1::2]
            if parts[0] == "wall":
                wall = c
            else:
                rows[int(parts[0])] = c
    if bits is None:
        bits = int(round(np.log2(len(rows)))) if rows else 0
    n = 2 ** bits
    if sorted(rows) != list(range(1, n + 1)):
        raise ValueError(f"{path}: state rows must be 1..{n}")
    if wall is None:
        raise ValueError(f"{path}: missing wall row")
    data = np.array([rows[i] for i in range(1, n + 1)])
    return SusceptibilityTable(bits, data[:, :3], data[:, 3:], wall[:3], wall[3:], prov)


# ---------------------------------------------------------------------------
# propagation kernels
# ---------------------------------------------------------------------------

def green(ra, rb, k0: float):
    """Scalar free-space kernel between points ``ra`` and ``rb``."""
    d = np.linalg.norm(np.asarray(rb, float) - np.asarray(ra, float), axis=-1)
    return np.exp(-1j * k0 * d) / (4.0 * np.pi * d)


@dataclass(frozen=True)
class IncidenceMatrix:
    """BS element -> surface node fields for unit excitations.

    ``e[n, m]`` is the co-polar incident electric field at node ``n``;
    ``h[n, m]`` is the incident magnetic field vector (global frame).
    """
    e: np.ndarray  # (N, M) complex
    h: np.ndarray  # (N, M, 3) complex
    nodes: np.ndarray  # (N, 3)
    weights: np.ndarray  # (N,)
    patch_index: np.ndarray  # (N,)

    @property
    def H1(self) -> np.ndarray:
        return self.e


def incidence_matrix(scene: SceneGeometry) -> IncidenceMatrix:
    nodes, w, idx = scene.quadrature_nodes()
    diff = nodes[:, None, :] - scene.bs_elements[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    g = np.exp(-1j * scene.k0 * d) / (4.0 * np.pi * d)
    rhat = diff / d[..., None]
    h = np.cross(rhat, scene.polarization) * (g / scene.eta0)[..., None]
    return IncidenceMatrix(e=g, h=h, nodes=nodes, weights=w, patch_index=idx)


@dataclass(frozen=True)
class RadiationMatrix:
    """Surface node -> evaluation point far-field kernel (area weight included)."""
    kernel: np.ndarray  # (L, N) complex
    rhat: np.ndarray  # (L, 3)
    points: np.ndarray  # (L, 3)

    @property
    def H2(self) -> np.ndarray:
        return self.kernel


def radiation_matrix(scene: SceneGeometry, points, nodes=None, weights=None) -> RadiationMatrix:
    if nodes is None:
        nodes, weights, _ = scene.quadrature_nodes()
    pts = np.atleast_2d(np.asarray(points, float))
    r = pts - scene.origin
    dist = np.linalg.norm(r, axis=-1)
    rhat = r / dist[:, None]
    k0 = scene.k0
    pref = 1j * k0 / (4.0 * np.pi) * np.exp(-1j * k0 * dist) / dist
    rt = nodes - scene.origin
    kern = pref[:, None] * weights[None, :] * np.exp(1j * k0 * (rhat @ rt.T))
    return RadiationMatrix(kernel=kern, rhat=rhat, points=pts)


# ---------------------------------------------------------------------------
# sheet currents
# ---------------------------------------------------------------------------

def parse_averaging(spec: Union[str, float, None]) -> float:
    """Field-averaging model -> scalar factor applied to the incident field.

    ``"incident"`` (default) uses the incident field at the patch centre;
    ``"two_sided(f)"`` scales it by ``f``.
    """
    if spec is None or spec == "incident":
        return 1.0
    if isinstance(spec, (int, float)):
        return float(spec)
    m = re.fullmatch(r"\s*two_sided\(\s*([-+0-9.eE]+)\s*\)\s*", spec)
    if not m:
        raise ValueError(f"unknown averaging model {spec!r}")
    return float(m.group(1))


def validate_states(scene: SceneGeometry, table: SusceptibilityTable, s) -> np.ndarray:
    s = np.asarray(s)
    if s.shape != (scene.P,):
        raise ValueError(f"configuration must have {scene.P} states, got shape {s.shape}")
    if s.size and (s.min() < 1 or s.max() > table.num_states):
        raise ValueError(f"state index outside 1..{table.num_states}")
    return s.astype(np.int64)


def node_susceptibilities(scene: SceneGeometry, table: SusceptibilityTable, s,
                          patch_index: Optional[np.ndarray] = None):
    """(Ke, Kh) per surface node, shape (N, 3) each, surface frame."""
    s = validate_states(scene, table, s)
    if patch_index is None:
        patch_index = scene.quadrature_nodes()[2]
    ke = np.empty((scene.n_patches, 3), complex)
    kh = np.empty((scene.n_patches, 3), complex)
    ke[:scene.P] = table.ke[s - 1]
    kh[:scene.P] = table.kh[s - 1]
    ke[scene.P:] = table.wall_ke
    kh[scene.P:] = table.wall_kh
    return ke[patch_index], kh[patch_index]


def patch_currents(scene: SceneGeometry, table: SusceptibilityTable, s, incident_e,
                   incident_h, averaging: Union[str, float, None] = "incident",
                   patch_index: Optional[np.ndarray] = None):
    """Equivalent electric and magnetic sheet currents per surface node.

    ``incident_e`` / ``incident_h`` are (N, 3) complex field vectors in the
    global frame.  Returns ``(J_e, J_h)`` as (N, 3) tangential vectors.
    """
    E = np.asarray(incident_e, complex)
    H = np.asarray(incident_h, complex)
    if patch_index is None:
        patch_index = scene.quadrature_nodes()[2]
    n = len(patch_index)
    if E.shape != (n, 3) or H.shape != (n, 3):
        raise ValueError(f"incident fields must have shape ({n}, 3)")
    f = parse_averaging(averaging)
    ke, kh = node_susceptibilities(scene, table, s, patch_index)
    w = 2.0 * np.pi * scene.f0
    basis = (scene.e1, scene.e2)  # tangential part only
    je = np.zeros((n, 3), complex)
    jh = np.zeros((n, 3), complex)
    for d, ed in enumerate(basis):
        je += (1j * w * EPS0 * ke[:, d] * f * (E @ ed))[:, None] * ed
        jh += (1j * w * MU0 * kh[:, d] * f * (H @ ed))[:, None] * ed
    return je, jh


def equivalent_current(rhat, je, jh, eta0: float = ETA0):
    """Far-field current combination r x [eta0 r x J_e + J_h] for one direction."""
    rhat = np.asarray(rhat, float)
    return np.cross(rhat, eta0 * np.cross(rhat, je) + jh)


# ---------------------------------------------------------------------------
# cascaded channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelFactors:
    """Separable form of the cascaded channel.

    ``Upsilon = sum_c X[c] @ diag(k[c]) @ Y[c]`` over the four channels
    (Ke_1, Ke_2, Kh_1, Kh_2), where ``k`` are the per-node susceptibility
    components.  ``X`` is (L, 4, N), ``Y`` is (4, N, M).
    """
    X: np.ndarray
    Y: np.ndarray
    patch_index: np.ndarray

    def coefficients(self, ke, kh) -> np.ndarray:
        """Stack (N, 3) susceptibilities into the (4, N) channel coefficients."""
        return np.stack([ke[:, 0], ke[:, 1], kh[:, 0], kh[:, 1]])

    def assemble(self, k: np.ndarray) -> np.ndarray:
        L = self.X.shape[0]
        N = self.X.shape[2]
        Xk = (self.X * k[None]).reshape(L, 4 * N)
        return Xk @ self.Y.reshape(4 * N, -1)


def channel_factors(scene: SceneGeometry, inc: IncidenceMatrix, rad: RadiationMatrix,
                    averaging: Union[str, float, None] = "incident") -> ChannelFactors:
    f = parse_averaging(averaging)
    chi = scene.polarization
    rh = rad.rhat
    we = (rh @ chi)[:, None] * rh - chi  # chi . (r x (r x v)) = we . v
    wh = np.cross(chi, rh)  # chi . (r x v) = wh . v
    jk = 1j * scene.k0
    L, N = rad.kernel.shape
    X = np.empty((L, 4, N), complex)
    Y = np.empty((4, N, inc.e.shape[1]), complex)
    for d, ed in enumerate((scene.e1, scene.e2)):
        X[:, d] = jk * rad.kernel * (we @ ed)[:, None]
        X[:, 2 + d] = jk * rad.kernel * (wh @ ed)[:, None]
        Y[d] = f * inc.e * (chi @ ed)
        Y[2 + d] = f * scene.eta0 * (inc.h @ ed)
    return ChannelFactors(X=X, Y=Y, patch_index=inc.patch_index)


def cascaded_matrix(scene: SceneGeometry, table: SusceptibilityTable, s,
                    inc: IncidenceMatrix, rad: RadiationMatrix,
                    averaging: Union[str, float, None] = "incident") -> np.ndarray:
    """L x M cascaded BS -> user channel for RIS configuration ``s``."""
    if inc.e.shape[0] != rad.kernel.shape[1]:
        raise ValueError("incidence and radiation matrices disagree on node count")
    fac = channel_factors(scene, inc, rad, averaging)
    ke, kh = node_susceptibilities(scene, table, s, inc.patch_index)
    return fac.assemble(fac.coefficients(ke, kh))


def cascaded_matrix_dense(scene: SceneGeometry, table: SusceptibilityTable, s,
                          inc: IncidenceMatrix, rad: RadiationMatrix,
                          averaging: Union[str, float, None] = "incident") -> np.ndarray:
    """Same channel via explicit per-element currents and vector far fields."""
    chi = scene.polarization
    L, M = rad.kernel.shape[0], inc.e.shape[1]
    out = np.zeros((L, M), complex)
    for m in range(M):
        E = inc.e[:, m, None] * chi
        je, jh = patch_currents(scene, table, s, E, inc.h[:, m], averaging, inc.patch_index)
        for l in range(L):
            jeq = equivalent_current(rad.rhat[l], je, jh, scene.eta0)
            out[l, m] = rad.kernel[l] @ (jeq @ chi)
    return out


def far_fields(upsilon: np.ndarray, A: np.ndarray) -> np.ndarray:
    upsilon = np.asarray(upsilon)
    A = np.asarray(A)
    if upsilon.shape[-1] != A.shape[-2]:
        raise ValueError(f"channel has {upsilon.shape[-1]} columns but weights have "
                         f"{A.shape[-2]} rows")
    return upsilon @ A


def grid_points(scene: SceneGeometry, nx: int, ny: int, area=None, height=None) -> np.ndarray:
    if nx < 2 or ny < 2:
        raise ValueError("footprint grid needs at least 2 x 2 points")
    x0, x1, y0, y1 = scene.user_area if area is None else area
    z = scene.user_height if height is None else height
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)])


def footprint(scene: SceneGeometry, table: SusceptibilityTable, s, A: np.ndarray,
              points, beam: int, inc: Optional[IncidenceMatrix] = None,
              averaging: Union[str, float, None] = "incident") -> np.ndarray:
    """Received power |F_b|^2 of beam ``beam`` (0-based) at each grid point."""
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.shape[0] == 0:
        raise ValueError("empty footprint grid")
    if inc is None:
        inc = incidence_matrix(scene)
    out = np.empty(pts.shape[0])
    chunk = 4096
    for i in range(0, pts.shape[0], chunk):
        rad = radiation_matrix(scene, pts[i:i + chunk], inc.nodes, inc.weights)
        ups = cascaded_matrix(scene, table, s, inc, rad, averaging)
        out[i:i + chunk] = np.abs(ups @ A[:, beam]) ** 2
    return out


# ---------------------------------------------------------------------------
# calibration oracle
# ---------------------------------------------------------------------------

def uniform_sheet_reflection(table: SusceptibilityTable, f0: float, size_wavelengths: float = 20.0,
                             distance_wavelengths: float = 1e5, state: Optional[int] = None):
    """Implied normal-incidence reflection of a large uniform sheet.

    Runs the forward model on a ``size x size`` (in wavelengths) sheet of
    half-wavelength patches lit by a normally incident plane wave and
    normalises the specular far field by that of an ideal ``R = 1`` sheet
    of the same area.  ``state=None`` evaluates every state and returns an
    array; ``state=0`` means the wall susceptibility.
    """
    k0 = wavenumber(f0)
    lam = 2 * np.pi / k0
    n = int(round(2 * size_wavelengths))
    cfg = SceneConfig(f0=f0, bs_rows=1, bs_cols=1, bs_position=(0.0, 1.0, 0.0),
                      ris_rows=n, ris_cols=n, ris_side=n * lam / 2,
                      wall_width=n * lam / 2, wall_height=n * lam / 2,
                      origin=(0.0, 0.0, 0.0), include_wall=False,
                      user_area=(-1.0, 1.0, -1.0, 1.0), min_user_separation=0.0)
    sc = build_scene(cfg)
    chi = sc.e2
    E = np.tile(chi, (sc.P, 1)).astype(complex)
    khat = -sc.normal
    H = np.tile(np.cross(khat, chi) / sc.eta0, (sc.P, 1)).astype(complex)
    dist = distance_wavelengths * lam
    rad = radiation_matrix(sc, sc.origin + dist * sc.normal)
    area = float(np.sum(sc.areas))
    ref = 1j * k0 * area / (2 * np.pi * dist) * np.exp(-1j * k0 * dist)

    def one(idx):
        if idx == 0:
            tb = table.with_all_states_as_wall()
            s = np.ones(sc.P, int)
        else:
            tb = table
            s = np.full(sc.P, idx)
        je, jh = patch_currents(sc, tb, s, E, H)
        jeq = equivalent_current(rad.rhat[0], je, jh, sc.eta0)
        return complex(rad.kernel[0] @ (jeq @ chi)) / ref

    if state is not None:
        return one(state)
    return np.array([one(i) for i in range(1, table.num_states + 1)])
