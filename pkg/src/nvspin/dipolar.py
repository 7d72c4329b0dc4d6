"""Dipolar hfi tensor of a nucleus in a discretized electron spin density.

The density is a weighted point set (positions in Angstrom, signed spin
populations as weights). The tensor is the point-dipole sum

    T_KL = prefactor * sum_i w_i (3 d_K d_L - delta_KL |d|^2) / |d|^5,
    d = r_i - R_nucleus,

whose off-diagonal elements are the ZX/ZY dipolar integrals evaluated by
quadrature. The kernel is traceless term by term.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import constants as sc

from .errors import ParseError, SingularDensity, UnnormalizedDensity
from .hfi import z_rotation

__all__ = [
    "SINGULAR_RADIUS",
    "G_N_C13",
    "SpinDensityModel",
    "DipoleConstants",
    "calibrated_constants",
    "t_tensor",
    "mirror_about_xz",
    "symmetry_residual",
    "axis_frame",
    "read_density",
    "ring_density",
]

SINGULAR_RADIUS = 0.05  # Angstrom
G_N_C13 = 1.40482  # nuclear g-factor of 13C (mu / (I mu_N), I = 1/2)


@dataclass(frozen=True, eq=False)
class SpinDensityModel:
    positions: np.ndarray
    weights: np.ndarray
    total_spin: float = 1.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True).reshape(-1, 3)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if len(pos) == 0:
            raise ValueError("a spin density needs at least one point")
        if len(w) != len(pos):
            raise ValueError(f"{len(pos)} positions but {len(w)} weights")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(w))):
            raise ValueError("density positions and weights must be finite")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def check_normalization(self, rtol=0.05):
        """Warn (and return False) unless the weights sum to about 2S."""
        target = 2.0 * self.total_spin
        ok = abs(self.total_weight - target) <= rtol * abs(target)
        if not ok:
            warnings.warn(
                f"density weights sum to {self.total_weight:.4g}, expected ~{target:g} for S={self.total_spin:g}",
                UnnormalizedDensity,
                stacklevel=2,
            )
        return ok

    def __add__(self, other):
        if not isinstance(other, SpinDensityModel):
            return NotImplemented
        return SpinDensityModel(
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
            self.total_spin,
        )

    def transformed(self, rotation, shift=None):
        """Apply r -> R r (+ shift) to every point."""
        pos = self.positions @ np.asarray(rotation, dtype=float).T
        if shift is not None:
            pos = pos + np.asarray(shift, dtype=float)
        return SpinDensityModel(pos, self.weights, self.total_spin)


@dataclass(frozen=True)
class DipoleConstants:
    """Kernel prefactor in kHz * Angstrom^3 (1.0 for symmetry studies)."""

    prefactor: float = 1.0

    def __post_init__(self):
        if not self.prefactor > 0:
            raise ValueError(f"prefactor must be positive, got {self.prefactor}")


def calibrated_constants(total_spin=1.0, g_n=G_N_C13):
    """Physical prefactor for a 13C nucleus from CODATA constants.

    (mu0/4pi) g_e mu_B g_n mu_N / h per unit spin population, divided by 2S
    because the density integrates to 2S. A single unit population at 1 A
    then gives the point-dipole coupling of an electron and a 13C spin
    (about 19.9 MHz).
    """
    mu0_4pi = sc.mu_0 / (4 * math.pi)
    g_e = abs(sc.physical_constants["electron g factor"][0])
    mu_b = sc.physical_constants["Bohr magneton"][0]
    mu_n = sc.physical_constants["nuclear magneton"][0]
    hz_m3 = mu0_4pi * g_e * mu_b * g_n * mu_n / sc.h
    khz_a3 = hz_m3 * 1e30 / 1e3
    return DipoleConstants(prefactor=khz_a3 / (2.0 * total_spin))


def _tree_sum(terms):
    """Sum along axis 0 by a fixed pairwise tree; result independent of BLAS/threads."""
    t = np.asarray(terms)
    while len(t) > 1:
        if len(t) % 2:
            t = np.concatenate([t, np.zeros((1,) + t.shape[1:])])
        t = t[0::2] + t[1::2]
    return t[0]


def t_tensor(density, nucleus, c=None):
    """Traceless dipolar tensor (kHz) at ``nucleus`` from the point density.

    Raises :class:`SingularDensity` if a point is within 0.05 A of the nucleus.
    """
    c = DipoleConstants() if c is None else c
    d = density.positions - np.asarray(nucleus, dtype=float)
    r2 = np.einsum("ij,ij->i", d, d)
    r = np.sqrt(r2)
    bad = np.nonzero(r < SINGULAR_RADIUS)[0]
    if len(bad):
        i = int(bad[np.argmin(r[bad])])
        raise SingularDensity(i, density.positions[i], r[i])
    scale = density.weights / (r2 * r2 * r)
    terms = 3.0 * d[:, :, None] * d[:, None, :]
    idx = np.arange(3)
    terms[:, idx, idx] -= r2[:, None]
    terms *= scale[:, None, None]
    t = c.prefactor * _tree_sum(terms)
    return 0.5 * (t + t.T)


def _mirror_matrix(plane_azimuth):
    r = z_rotation(plane_azimuth)
    return r @ np.diag([1.0, -1.0, 1.0]) @ r.T


def mirror_about_xz(density, plane_azimuth=0.0):
    """Symmetrize the density about the vertical plane at ``plane_azimuth`` degrees.

    The plane contains the Z axis. Each point keeps half its weight and its
    mirror image gets the other half, so the total weight is unchanged.
    """
    m = _mirror_matrix(plane_azimuth)
    mirrored = density.positions @ m.T
    return SpinDensityModel(
        np.vstack([density.positions, mirrored]),
        np.concatenate([density.weights, density.weights]) * 0.5,
        density.total_spin,
    )


def axis_frame(axis):
    """Orthonormal frame (rows X', Y', Z') with X' along ``axis``.

    Z' is the part of the lab Z axis orthogonal to the axis (lab X when the
    axis is along Z), so the frame stays as close to NV-PACS as possible.
    """
    x = np.asarray(axis, dtype=float)
    n = np.linalg.norm(x)
    if not n > 0:
        raise ValueError("axis must be a non-zero vector")
    x = x / n
    ref = np.array([0.0, 0.0, 1.0])
    z = ref - np.dot(ref, x) * x
    if np.linalg.norm(z) < 1e-12:
        ref = np.array([1.0, 0.0, 0.0])
        z = ref - np.dot(ref, x) * x
    z /= np.linalg.norm(z)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def symmetry_residual(density, nucleus, axis_candidate, c=None):
    """How far ``axis_candidate`` is from being a principal axis of T.

    Returns sqrt(T'_XY**2 + T'_XZ**2) / ||T||_F with X' along the candidate
    axis. This is unchanged by any rotation about the candidate axis, and it
    vanishes when the local density is axially symmetric about that axis.
    A zero tensor gives 0.
    """
    t = t_tensor(density, nucleus, c)
    norm = np.linalg.norm(t)
    if norm == 0:
        return 0.0
    q = axis_frame(axis_candidate)
    tp = q @ t @ q.T
    return float(math.hypot(tp[0, 1], tp[0, 2]) / norm)


def ring_density(center, axis, radius, n=8, weight=1.0, phase=0.0):
    """``n`` equal-weight points on a circle about ``axis`` through ``center``."""
    q = axis_frame(axis)
    ang = phase + 2 * math.pi * np.arange(n) / n
    local = np.stack([np.zeros(n), radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    pos = np.asarray(center, dtype=float) + local @ q
    return SpinDensityModel(pos, np.full(n, weight / n))


def read_density(stream, total_spin=1.0, source=None):
    """Read 'x y z weight' rows (Angstrom, dimensionless); '#' starts a comment."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 4:
            raise ParseError(f"expected 'x y z weight', got {len(parts)} fields", lineno, source)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno, source) from None
    if not rows:
        raise ParseError("density file has no points", None, source)
    a = np.array(rows)
    return SpinDensityModel(a[:, :3], a[:, 3], total_spin)
