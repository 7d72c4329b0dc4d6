"""Hyperfine matrix algebra for NV-13C systems.

All matrix elements are in kHz. Angles are taken in degrees at the public
boundary and converted to radians internally. The Z axis of the NV principal
axes system (NV-PACS) is the N-V symmetry axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameMismatch, InvalidMatrix

__all__ = [
    "Frame",
    "HfiMatrix",
    "HfiDecomposition",
    "PrincipalForm",
    "SecularParams",
    "decompose",
    "secular_params",
    "rotate_z",
    "z_rotation",
    "to_site_frame",
    "mirror_residual",
    "diagonalize",
]

# relative to the largest deviation from A_iso
_ISOTROPIC_TOL = 1e-12


class Frame(enum.Enum):
    NV_PACS = "NV_PACS"
    SITE_PACS = "SITE_PACS"
    PRINCIPAL = "PRINCIPAL"


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HfiMatrix:
    """Symmetric 3x3 hyperfine matrix tagged with the frame it is written in.

    ``site_azimuth`` (degrees) is only meaningful for ``Frame.SITE_PACS``.
    Asymmetric or non-finite input raises :class:`InvalidMatrix`.
    """

    elements: np.ndarray
    frame: Frame = Frame.NV_PACS
    site_azimuth: float | None = None

    def __post_init__(self):
        a = np.asarray(self.elements, dtype=float)
        if a.shape != (3, 3):
            raise InvalidMatrix(f"hfi matrix must be 3x3, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidMatrix("hfi matrix has non-finite elements")
        if np.any(a != a.T):
            raise InvalidMatrix(
                "hfi matrix is not symmetric (max |A_KL - A_LK| = "
                f"{np.max(np.abs(a - a.T)):.3g})"
            )
        if self.frame is Frame.SITE_PACS and self.site_azimuth is None:
            raise InvalidMatrix("SITE_PACS matrices need a site_azimuth")
        object.__setattr__(self, "elements", _readonly(a))

    @classmethod
    def from_upper(cls, xx, xy, xz, yy, yz, zz, frame=Frame.NV_PACS, site_azimuth=None):
        """Build from the upper triangle (XX, XY, XZ, YY, YZ, ZZ)."""
        a = np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]], dtype=float)
        return cls(a, frame, site_azimuth)

    @classmethod
    def symmetrized(cls, a, frame=Frame.NV_PACS, site_azimuth=None):
        """Build from a matrix that is symmetric up to rounding."""
        a = np.asarray(a, dtype=float)
        return cls(0.5 * (a + a.T), frame, site_azimuth)

    def upper(self):
        a = self.elements
        return (a[0, 0], a[0, 1], a[0, 2], a[1, 1], a[1, 2], a[2, 2])

    def __getitem__(self, idx):
        return self.elements[idx]

    def __eq__(self, other):
        if not isinstance(other, HfiMatrix):
            return NotImplemented
        return (
            self.frame is other.frame
            and self.site_azimuth == other.site_azimuth
            and np.array_equal(self.elements, other.elements)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HfiDecomposition:
    a_iso: float
    dipolar: np.ndarray

    def reconstruct(self):
        return self.a_iso * np.eye(3) + self.dipolar


@dataclass(frozen=True, eq=False)
class PrincipalForm:
    """Principal values and axes of a hyperfine matrix.

    Columns of ``direction_cosines`` are the principal x, y, z axes written
    in the source frame, so ``U @ diag(values) @ U.T`` gives back the matrix.
    """

    a_iso: float
    a_xx_d: float
    a_yy_d: float
    a_zz_d: float
    t_axial: float
    rhombicity: float
    direction_cosines: np.ndarray = field(repr=False)

    @property
    def values(self):
        return np.array([self.a_xx_d, self.a_yy_d, self.a_zz_d])

    @property
    def cos_Zz(self):
        return float(self.direction_cosines[2, 2])

    def reconstruct(self):
        u = self.direction_cosines
        return u @ np.diag(self.values) @ u.T


@dataclass(frozen=True)
class SecularParams:
    """A_ZZ, T_nd (kHz) and the azimuth phi (radians) of the secular term."""

    a_zz: float
    t_nd: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.a_zz) and math.isfinite(self.t_nd) and math.isfinite(self.phi)):
            raise InvalidMatrix("secular parameters must be finite")
        if self.t_nd < 0:
            raise InvalidMatrix(f"t_nd must be >= 0, got {self.t_nd}")

    @property
    def a_zx(self):
        return self.t_nd * math.cos(self.phi)

    @property
    def a_zy(self):
        return self.t_nd * math.sin(self.phi)


def _as_hfi(a):
    if isinstance(a, HfiMatrix):
        return a
    return HfiMatrix(a)


def _require_frame(a, frame):
    if a.frame is not frame:
        raise FrameMismatch(f"expected a matrix in {frame.value}, got {a.frame.value}")


def decompose(a):
    """Split A into its isotropic (Fermi contact) and traceless dipolar parts."""
    a = _as_hfi(a)
    m = a.elements
    a_iso = float(np.trace(m) / 3.0)
    dipolar = m - a_iso * np.eye(3)
    return HfiDecomposition(a_iso=a_iso, dipolar=_readonly(dipolar))


def secular_params(a):
    """Return the (A_ZZ, T_nd, phi) triple that enters the secular Hamiltonian.

    The isotropic part is diagonal, so the off-diagonal ZX/ZY elements of A
    and of its dipolar part coincide.
    """
    a = _as_hfi(a)
    _require_frame(a, Frame.NV_PACS)
    m = a.elements
    zx, zy = float(m[2, 0]), float(m[2, 1])
    t_nd = math.hypot(zx, zy)
    phi = math.atan2(zy, zx) if t_nd > 0 else 0.0
    return SecularParams(a_zz=float(m[2, 2]), t_nd=t_nd, phi=phi)


def z_rotation(theta_deg):
    """Right-handed rotation matrix about +Z by ``theta_deg`` degrees."""
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rotated(m, theta_deg):
    r = z_rotation(theta_deg)
    out = r.T @ m @ r
    return 0.5 * (out + out.T)


def rotate_z(a, theta_deg):
    """Rewrite A in axes turned by ``theta_deg`` about Z: A' = R^T A R.

    The secular azimuth shifts as phi -> phi - theta; A_ZZ and T_nd are
    unchanged.
    """
    a = _as_hfi(a)
    _require_frame(a, Frame.NV_PACS)
    return HfiMatrix(_rotated(a.elements, theta_deg), Frame.NV_PACS)


def to_site_frame(a, site_azimuth):
    """Rotate A so that the site-specific XZ plane contains the 13C site.

    ``site_azimuth`` is the polar angle (degrees) of the site's (X, Y)
    position in NV-PACS. For a matrix with the C_s symmetry of an NV-13C
    pair the returned A'_ZY and A'_XY vanish; see :func:`mirror_residual`.
    """
    a = _as_hfi(a)
    _require_frame(a, Frame.NV_PACS)
    return HfiMatrix(_rotated(a.elements, site_azimuth), Frame.SITE_PACS, float(site_azimuth))


def mirror_residual(a):
    """max(|A'_ZY|, |A'_XY|) / T_nd for a matrix in the site frame.

    Diagnostic only: finite clusters break the mirror symmetry slightly.
    Returns 0 for an exactly symmetric matrix and inf when T_nd is zero but
    the Y couplings are not.
    """
    a = _as_hfi(a)
    m = a.elements
    off = max(abs(m[2, 1]), abs(m[0, 1]))
    t_nd = math.hypot(m[2, 0], m[2, 1])
    if off == 0:
        return 0.0
    if t_nd == 0:
        return math.inf
    return float(off / t_nd)


def _fix_signs(u):
    u = u.copy()
    for j in range(u.shape[1]):
        k = int(np.argmax(np.abs(u[:, j])))
        if u[k, j] < 0:
            u[:, j] = -u[:, j]
    return u


def diagonalize(a):
    """Principal values, axial/rhombic parts and direction cosines of A.

    z is the principal axis whose eigenvalue deviates most from A_iso; of the
    remaining two, x takes the smaller eigenvalue so the rhombicity is
    non-negative. Eigenvector signs are fixed so that the largest-magnitude
    entry of each column is positive. A fully isotropic matrix returns the
    identity as its axes (cos Zz = 1).
    """
    a = _as_hfi(a)
    m = a.elements
    a_iso = float(np.trace(m) / 3.0)
    w, v = np.linalg.eigh(m)
    dev = np.abs(w - a_iso)
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(dev) <= _ISOTROPIC_TOL * scale:
        return PrincipalForm(
            a_iso=a_iso,
            a_xx_d=float(w[0]),
            a_yy_d=float(w[1]),
            a_zz_d=float(w[2]),
            t_axial=0.0,
            rhombicity=0.0,
            direction_cosines=_readonly(np.eye(3)),
        )
    iz = int(np.argmax(dev))
    rest = [i for i in range(3) if i != iz]  # already ascending
    order = [rest[0], rest[1], iz]
    vals = w[order]
    u = _fix_signs(v[:, order])
    t_axial = (vals[2] - a_iso) / 2.0
    rhomb = (vals[1] - vals[0]) / 2.0
    return PrincipalForm(
        a_iso=a_iso,
        a_xx_d=float(vals[0]),
        a_yy_d=float(vals[1]),
        a_zz_d=float(vals[2]),
        t_axial=float(t_axial),
        rhombicity=float(rhomb),
        direction_cosines=_readonly(u),
    )
