"""Domains in C^n, the base foliation by horizontal segments, and coordinate frames.

A point of C^n is stored as a real vector of length 2n: coordinate 2l-2 holds
Re z_l and coordinate 2l-1 holds Im z_l.  The base foliation partitions a
domain into straight segments parallel to the Re z_1 axis; everything else in
the package bends images of these segments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import as_point, as_point_batch, check_index

DOMAIN_KINDS = ("box", "polydisc", "ball")

#: ambient index of the Re z_1 axis, the direction of every base leaf
LEAF_AXIS = 0


def to_complex(p, n=None):
    """View a real point (…, 2n) as a complex vector (…, n)."""
    a = np.asarray(p, dtype=float)
    if a.shape[-1] % 2:
        raise ValueError("point length must be even")
    if n is not None and a.shape[-1] != 2 * n:
        raise ValueError(f"expected {2 * n} real coordinates, got {a.shape[-1]}")
    return a[..., 0::2] + 1j * a[..., 1::2]


def from_complex(z):
    """Inverse of :func:`to_complex`."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=float)
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def complex_coord(p, l):
    """Return z_l of a point as a Python complex (l is 1-based)."""
    a = np.asarray(p, dtype=float)
    check_index(l, a.shape[-1] // 2)
    return complex(a[..., 2 * l - 2] + 1j * a[..., 2 * l - 1])


@dataclass(frozen=True)
class Domain:
    """A box, polydisc or ball in C^n ≅ R^{2n}.

    ``radii`` holds per-real-coordinate half-extents for a box (2n values),
    per-complex-coordinate disc radii for a polydisc (n values), and a single
    Euclidean radius for a ball.
    """

    kind: str
    n: int
    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("complex dimension must be >= 1")
        object.__setattr__(self, "center", as_point(self.center, self.n))
        r = np.asarray(self.radii, dtype=float)
        want = {"box": 2 * self.n, "polydisc": self.n, "ball": 1}[self.kind]
        if r.shape != (want,):
            raise ValueError(f"{self.kind} in C^{self.n} needs {want} radii, got {r.shape}")
        if not np.all(r > 0) or not np.all(np.isfinite(r)):
            raise ValueError("radii must be positive and finite")
        object.__setattr__(self, "radii", r)

    # -- membership -----------------------------------------------------

    def interior_margin(self, pts):
        """Radius of the largest Euclidean ball around each point inside the domain.

        Negative values mean the point is outside.
        """
        a, single = as_point_batch(pts, self.n)
        d = a - self.center
        if self.kind == "box":
            m = (self.radii - np.abs(d)).min(axis=1)
        elif self.kind == "polydisc":
            m = (self.radii - np.abs(to_complex(d))).min(axis=1)
        else:
            m = self.radii[0] - np.linalg.norm(d, axis=1)
        return float(m[0]) if single else m

    def contains(self, pts, atol=0.0):
        """Closed-domain membership, with optional tolerance."""
        m = self.interior_margin(pts)
        return m >= -atol

    @property
    def diameter(self):
        if self.kind == "ball":
            return 2.0 * float(self.radii[0])
        # box: opposite corners; polydisc: opposite points of every disc factor
        return 2.0 * float(np.linalg.norm(self.radii))

    @property
    def bounding_box(self):
        """(lo, hi) corners of the axis-aligned bounding box."""
        if self.kind == "box":
            h = self.radii
        elif self.kind == "polydisc":
            h = np.repeat(self.radii, 2)
        else:
            h = np.full(2 * self.n, self.radii[0])
        return self.center - h, self.center + h

    def sample(self, m, rng):
        """Draw m points uniformly from the domain."""
        if self.kind == "box":
            u = rng.uniform(-1.0, 1.0, size=(m, 2 * self.n))
            return self.center + u * self.radii
        if self.kind == "polydisc":
            r = np.sqrt(rng.uniform(0.0, 1.0, size=(m, self.n))) * self.radii
            th = rng.uniform(0.0, 2.0 * np.pi, size=(m, self.n))
            return self.center + from_complex(r * np.exp(1j * th))
        g = rng.standard_normal(size=(m, 2 * self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radii[0] * rng.uniform(0.0, 1.0, size=(m, 1)) ** (1.0 / (2 * self.n))
        return self.center + g * rad

    # -- serialization ---------------------------------------------------

    def to_json_dict(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "center": self.center.tolist(),
            "radii": self.radii.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(kind=d["kind"], n=int(d["n"]), center=d["center"], radii=d["radii"])


@dataclass(frozen=True)
class BaseLeaf:
    """One segment of the base foliation: anchor + t * e_{Re z1}, t in [t_min, t_max].

    The anchor is canonical: it is the midpoint of the segment, so two leaves
    coincide exactly when their anchors coincide.
    """

    anchor: np.ndarray
    t_min: float
    t_max: float

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ValueError("degenerate leaf: t_min must be < t_max")

    def point(self, t):
        t = np.asarray(t, dtype=float)
        out = np.broadcast_to(self.anchor, t.shape + self.anchor.shape).copy()
        out[..., LEAF_AXIS] += t
        return out

    @property
    def length(self):
        return self.t_max - self.t_min

    def param_of(self, p):
        """Leaf parameter of a point assumed to lie on this leaf."""
        return float(np.asarray(p, dtype=float)[LEAF_AXIS] - self.anchor[LEAF_AXIS])


def base_leaf_through(domain, p):
    """The base-foliation segment through p, clipped to the closed domain."""
    p = as_point(p, domain.n)
    if not domain.contains(p, atol=1e-12):
        raise ValueError("point lies outside the domain")
    d = p - domain.center
    if domain.kind == "box":
        lo = -domain.radii[LEAF_AXIS] - d[LEAF_AXIS]
        hi = domain.radii[LEAF_AXIS] - d[LEAF_AXIS]
    elif domain.kind == "polydisc":
        # only z_1 constrains the chord: (a+t)^2 + b^2 <= r^2
        a, b = d[0], d[1]
        r = domain.radii[0]
        half = math.sqrt(max(r * r - b * b, 0.0))
        lo, hi = -a - half, -a + half
    else:
        # |d + t e_1|^2 <= R^2
        c = float(d @ d) - domain.radii[0] ** 2
        disc = d[LEAF_AXIS] ** 2 - c
        half = math.sqrt(max(disc, 0.0))
        lo, hi = -d[LEAF_AXIS] - half, -d[LEAF_AXIS] + half
    if not lo < hi:
        raise ValueError("leaf through this point is degenerate (boundary touch point)")
    mid = 0.5 * (lo + hi)
    anchor = p.copy()
    anchor[LEAF_AXIS] += mid
    half_len = 0.5 * (hi - lo)
    return BaseLeaf(anchor=anchor, t_min=-half_len, t_max=half_len)


def leaves_equal(a, b, tol=1e-12):
    """Whether two base leaves are the same segment (canonical anchors compared)."""
    return bool(np.max(np.abs(a.anchor - b.anchor)) <= tol)


@dataclass(frozen=True)
class PlaneFrame:
    """Orthonormal frame of the z_l coordinate plane: v along Re z_l, u along Im z_l."""

    l: int
    v: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)


def plane_frame(l, n):
    check_index(l, n)
    v = np.zeros(2 * n)
    u = np.zeros(2 * n)
    v[2 * l - 2] = 1.0
    u[2 * l - 1] = 1.0
    return PlaneFrame(l=l, v=v, u=u)
