"""One compactly supported perturbation step.

A stage bends the straight segment of the base foliation through its center
into a corner.  It is the composition of two homeomorphisms expressed in a
normalized frame A (an orthogonal permutation sending the leaf tangent to
e1 and the in-plane direction v to e2):

* the time-1 map of the vector field X(y) = omega(|y|/delta) (y1+y2) (e2-e1),
  which rotates the local leaf from the e1 axis onto the e2 axis, and
* the bend h(x) = x + psi_eta(|x - center|) u, whose tent-shaped profile
  creates an angular point at center + K*eta*u with opening 2*atan(1/K).

Both maps are the identity outside a ball of radius 2*delta < epsilon around
the center, so a stage never disturbs anything outside its support ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .validation import as_point, as_point_batch, check_index

#: default bend constant, the largest K (with 10% slack against 1/2) for which
#: the tent profile K*omega(2t)*(1-|t|) has Lipschitz constant <= 1/2.
#: Derived by _derive_bend_constant(); frozen so manifests are reproducible.
K_BEND_DEFAULT = 0.232$PLACEHOLDER$

#: certified lower Lipschitz constant of the time-1 flow map at the default
#: 64-step RK4 discretization (grid-sampled min singular value of the Jacobian
#: scaled by a 0.9 safety factor; scale invariant in delta).
#: Derived by _derive_flow_lower_lip(); frozen for the default step count.
FLOW_LOWER_LIP_64 = 0.2$PLACEHOLDER$

#: contraction factor certificate for the bend map inverse (Lipschitz 1/2 of psi).
H_LOWER_LIP = 0.5

DEFAULT_FLOW_STEPS = 64


class ContractionError(RuntimeError):
    """Fixed-point inversion of the bend map failed to converge."""


def bump_omega(t):
    """C-infinity plateau bump: 1 on [-1, 1], 0 outside (-2, 2).

    On 1 < |t| < 2 the standard smooth blend q(2-|t|) / (q(2-|t|) + q(|t|-1))
    with q(x) = exp(-1/x), so omega(1.5) = 0.5 exactly by symmetry.
    """
    a = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(a)
    out[a <= 1.0] = 1.0
    mid = (a > 1.0) & (a < 2.0)
    if np.any(mid):
        x = a[mid]
        qa = np.exp(-1.0 / (2.0 - x))
        qb = np.exp(-1.0 / (x - 1.0))
        out[mid] = qa / (qa + qb)
    return float(out) if out.ndim == 0 else out


def psi_eta(t, eta, K):
    """Tent-shaped bend profile eta * K * omega(2t/eta) * (1 - |t|/eta).

    Supported on |t| < eta; equals K*(eta-|t|) on |t| <= eta/2, so the graph
    near 0 is two straight arms meeting at height K*eta.
    """
    if eta <= 0 or K <= 0:
        raise ValueError("eta and K must be positive")
    a = np.abs(np.asarray(t, dtype=float)) / eta
    val = eta * K * bump_omega(2.0 * a) * (1.0 - a)
    out = np.where(a >= 1.0, 0.0, val)
    return float(out) if out.ndim == 0 else out


def _tent_lipschitz(grid_points=100001):
    """Grid Lipschitz constant of the K=1 profile omega(2t)(1-|t|)."""
    t = np.linspace(-1.05, 1.05, grid_points)
    prof = bump_omega(2.0 * t) * (1.0 - np.abs(t))
    prof[np.abs(t) >= 1.0] = 0.0
    return float(np.max(np.abs(np.diff(prof) / np.diff(t))))


def _derive_bend_constant():
    # sup|psi'| <= 0.45 leaves a 10% margin under the required 1/2
    lip1 = _tent_lipschitz()
    return math.floor(0.45 / lip1 * 1e6) / 1e6


def select_K():
    """Default bend constant; see K_BEND_DEFAULT."""
    return K_BEND_DEFAULT


# -- the flow ------------------------------------------------------------


def _flow_field(y, delta):
    """X(y) = omega(|y|/delta) * (y1 + y2) * (e2 - e1), vectorized over rows."""
    r = np.linalg.norm(y, axis=1)
    amp = bump_omega(r / delta) * (y[:, 0] + y[:, 1])
    out = np.zeros_like(y)
    out[:, 0] = -amp
    out[:, 1] = amp
    return out


def flow_time1(y, delta, direction="forward", steps=DEFAULT_FLOW_STEPS):
    """Time-1 map of the rotation field (or its inverse) by fixed-step RK4.

    Works in normalized coordinates: ``y`` is an (m, d) batch or a single
    (d,) vector with d >= 2.  The backward direction integrates -X, which is
    the exact inverse of the time-1 flow (up to discretization error).
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    arr = np.asarray(y, dtype=float)
    single = arr.ndim == 1
    pts = arr[None, :].copy() if single else arr.copy()
    if pts.shape[1] < 2:
        raise ValueError("flow needs at least two coordinates")
    sign = 1.0 if direction == "forward" else -1.0
    h = sign / steps
    for _ in range(steps):
        k1 = _flow_field(pts, delta)
        k2 = _flow_field(pts + (0.5 * h) * k1, delta)
        k3 = _flow_field(pts + (0.5 * h) * k2, delta)
        k4 = _flow_field(pts + h * k3, delta)
        pts += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return pts[0] if single else pts


def _derive_flow_lower_lip(steps, margin=0.9):
    """Grid-sampled lower Lipschitz constant of the discrete time-1 flow.

    The field only moves (y1, y2) and depends on the remaining coordinates
    through rho = |y_rest|, which is invariant, so the full Jacobian reduces
    to the 3x3 Jacobian of the (y1, y2, rho) system; its smallest singular
    value (capped at 1, attained outside the support) bounds the full one.
    """
    ys = np.arange(-2.1, 2.1001, 0.15)
    rhos = np.arange(0.0, 2.0001, 0.25)
    g1, g2, g3 = np.meshgrid(ys, ys, rhos, indexing="ij")
    states = np.column_stack([g1.ravel(), g2.ravel(), g3.ravel()])
    states = states[np.linalg.norm(states, axis=1) < 2.05]
    m = len(states)
    eps = 1e-6
    batch = [states]
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        batch.extend([states + e, states - e])
    out = flow_time1(np.concatenate(batch), 1.0, "forward", steps)
    jac = np.empty((m, 3, 3))
    for j in range(3):
        plus = out[(1 + 2 * j) * m : (2 + 2 * j) * m]
        minus = out[(2 + 2 * j) * m : (3 + 2 * j) * m]
        jac[:, :, j] = (plus - minus) / (2.0 * eps)
    sigmas = np.linalg.svd(jac, compute_uv=False)[:, -1]
    return margin * min(1.0, float(sigmas.min()))


@lru_cache(maxsize=8)
def flow_lower_lipschitz(steps=DEFAULT_FLOW_STEPS):
    """Certified lower Lipschitz constant for the time-1 flow at a step count."""
    if steps == DEFAULT_FLOW_STEPS:
        return FLOW_LOWER_LIP_64
    return _derive_flow_lower_lip(steps)


# -- stages ----------------------------------------------------------------


def _build_frame(l, n):
    """Permutation frame sending the leaf tangent to e1 and v to e2.

    For l >= 2 the bend plane is the z_l coordinate plane (v = Re z_l,
    u = Im z_l); for l = 1 the tangent already lies in the z_1 plane, so
    v = Im z_1 and u = Re z_1.
    """
    dim = 2 * n
    if l == 1:
        order = list(range(dim))
        v_idx, u_idx = 1, 0
    else:
        v_idx, u_idx = 2 * l - 2, 2 * l - 1
        rest = [j for j in range(dim) if j not in (0, v_idx)]
        order = [0, v_idx] + rest
    frame = np.zeros((dim, dim))
    for i, j in enumerate(order):
        frame[i, j] = 1.0
    return frame, v_idx, u_idx


@dataclass(frozen=True)
class Stage:
    """One perturbation step: where it acts, how wide, and how sharp the bend is."""

    center: np.ndarray
    epsilon: float
    delta: float
    eta: float
    k_bend: float
    l: int
    n: int
    flow_steps: int = DEFAULT_FLOW_STEPS
    frame: np.ndarray = field(default=None, repr=False)
    frame_inv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center, self.n))
        check_index(self.l, self.n)
        if self.frame is None:
            frame, _, _ = _build_frame(self.l, self.n)
            object.__setattr__(self, "frame", frame)
        else:
            object.__setattr__(self, "frame", np.asarray(self.frame, dtype=float))
        if self.frame_inv is None:
            object.__setattr__(self, "frame_inv", self.frame.T.copy())
        if not (self.epsilon > 0 and self.delta > 0 and self.eta > 0 and self.k_bend > 0):
            raise ValueError("stage radii and bend constant must be positive")
        if 3.0 * self.delta > self.epsilon:
            raise ValueError("flow ball 3*delta must fit inside the support ball")
        if not self.eta < self.delta:
            raise ValueError("bend radius eta must be smaller than delta")
        if self.k_bend > 0.5:
            raise ValueError("bend constant above 1/2 violates the Lipschitz budget")

    @property
    def u(self):
        """Ambient bend direction (Im z_l axis, or Re z_1 axis when l = 1)."""
        _, _, u_idx = _build_frame(self.l, self.n)
        out = np.zeros(2 * self.n)
        out[u_idx] = 1.0
        return out

    @property
    def v(self):
        """Ambient in-plane leaf direction after the flow."""
        _, v_idx, _ = _build_frame(self.l, self.n)
        out = np.zeros(2 * self.n)
        out[v_idx] = 1.0
        return out

    def to_json_dict(self):
        return {
            "center": self.center.tolist(),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "eta": self.eta,
            "k_bend": self.k_bend,
            "l": self.l,
            "n": self.n,
            "flow_steps": self.flow_steps,
            "frame": self.frame.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            center=d["center"],
            epsilon=float(d["epsilon"]),
            delta=float(d["delta"]),
            eta=float(d["eta"]),
            k_bend=float(d["k_bend"]),
            l=int(d["l"]),
            n=int(d["n"]),
            flow_steps=int(d["flow_steps"]),
            frame=d["frame"],
        )


def make_stage(center, epsilon, l, n, k_bend=None, flow_steps=DEFAULT_FLOW_STEPS):
    """Build a stage from its support ball; delta and eta derive from epsilon."""
    delta = epsilon / 3.2
    eta = delta / 2.0
    return Stage(
        center=center,
        epsilon=float(epsilon),
        delta=delta,
        eta=eta,
        k_bend=select_K() if k_bend is None else float(k_bend),
        l=l,
        n=n,
        flow_steps=flow_steps,
    )


def stage_lower_lipschitz(stage):
    """Certified bi-Lipschitz lower bound of one stage map.

    Product of the bend-map bound 1/2, the flow certificate, and the frame
    condition number (1, the frame is orthogonal).
    """
    return H_LOWER_LIP * flow_lower_lipschitz(stage.flow_steps)


def stage_forward(stage, x):
    """Apply the stage homeomorphism; identity outside the support ball."""
    pts, single = as_point_batch(x, stage.n)
    out = pts.copy()
    d = pts - stage.center
    mask = np.einsum("ij,ij->i", d, d) < (2.0 * stage.delta) ** 2
    if np.any(mask):
        y = d[mask] @ stage.frame.T
        y = flow_time1(y, stage.delta, "forward", stage.flow_steps)
        o = y @ stage.frame_inv.T
        disp = psi_eta(np.linalg.norm(o, axis=1), stage.eta, stage.k_bend)
        o = o + disp[:, None] * stage.u
        out[mask] = stage.center + o
    return out[0] if single else out


def stage_inverse(stage, y):
    """Inverse of :func:`stage_forward`.

    The bend is undone by the 1-d fixed-point iteration
    x_{j+1} = y - psi_eta(|x_j|) u, a contraction with factor <= 1/2 thanks to
    the Lipschitz bound on the profile; the flow is undone by integrating the
    reversed field.
    """
    pts, single = as_point_batch(y, stage.n)
    out = pts.copy()
    d = pts - stage.center
    mask = np.einsum("ij,ij->i", d, d) < (2.0 * stage.delta) ** 2
    if np.any(mask):
        target = d[mask]
        u = stage.u
        o = target.copy()
        tol = 4e-16 * (stage.eta + float(np.abs(target @ u).max(initial=0.0)))
        for _ in range(60):
            disp = psi_eta(np.linalg.norm(o, axis=1), stage.eta, stage.k_bend)
            nxt = target - disp[:, None] * u
            change = float(np.abs((nxt - o) @ u).max(initial=0.0))
            o = nxt
            if change <= tol:
                break
        else:
            raise ContractionError(
                "bend inversion did not converge in 60 steps; stage violates the Lipschitz invariant"
            )
        yv = o @ stage.frame.T
        yv = flow_time1(yv, stage.delta, "backward", stage.flow_steps)
        out[mask] = stage.center + yv @ stage.frame_inv.T
    return out[0] if single else out


# -- angular geometry -------------------------------------------------------


@dataclass(frozen=True)
class AngularPoint:
    """The corner a stage creates: location, coordinate class, and arm directions.

    The arms are unit complex numbers in the convention v ↔ 1, u ↔ i of the
    bend plane; t2 = conj(t1) and the opening angle is 2*atan(1/K).
    """

    q: np.ndarray
    l: int
    t1: complex
    t2: complex
    angle: float


def angular_data(stage):
    """Analytic corner data of a stage."""
    K = stage.k_bend
    r = math.hypot(1.0, K)
    t1 = complex(1.0, K) / r
    t2 = complex(1.0, -K) / r
    q = stage.center + (K * stage.eta) * stage.u
    return AngularPoint(q=q, l=stage.l, t1=t1, t2=t2, angle=2.0 * math.atan(1.0 / K))


def local_leaf_offsets(stage, ts):
    """Image of local leaf parameters, as offsets from the stage center.

    Runs the same numerical pipeline as :func:`stage_forward` but keeps
    coordinates relative to the center, so corner geometry stays resolvable
    for stages far smaller than the ambient floating-point resolution.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    y = np.zeros((ts.size, 2 * stage.n))
    y[:, 0] = ts  # the frame sends the leaf tangent to e1
    y = flow_time1(y, stage.delta, "forward", stage.flow_steps)
    o = y @ stage.frame_inv.T
    disp = psi_eta(np.linalg.norm(o, axis=1), stage.eta, stage.k_bend)
    return o + disp[:, None] * stage.u


def fit_arm_directions(stage, depth=12):
    """Arm directions and opening angle measured from the discretized leaf image.

    Secants from the corner to sampled image points on either side; returns
    (d_plus, d_minus, angle) where the d's are unit complex numbers in the
    v ↔ 1, u ↔ i convention, pointing away from the corner.
    """
    ladder = stage.eta / 2.0 * 0.5 ** np.arange(depth, dtype=float)
    ts = np.concatenate([-ladder, ladder])
    offs = local_leaf_offsets(stage, ts)
    corner = (stage.k_bend * stage.eta) * stage.u
    sec = offs - corner
    z = sec @ stage.v + 1j * (sec @ stage.u)
    z /= np.abs(z)
    d_minus = z[:depth].mean()
    d_plus = z[depth:].mean()
    d_minus /= abs(d_minus)
    d_plus /= abs(d_plus)
    ang = math.acos(min(1.0, max(-1.0, (d_plus * d_minus.conjugate()).real)))
    return d_plus, d_minus, ang


def plane_deviation(stage, n_samples=64):
    """Max distance of the near-corner leaf image from the prescribed bend plane."""
    ts = np.linspace(-stage.eta / 2.0, stage.eta / 2.0, n_samples)
    offs = local_leaf_offsets(stage, ts)
    offs = offs - np.outer(offs @ stage.u, stage.u) - np.outer(offs @ stage.v, stage.v)
    return float(np.linalg.norm(offs, axis=1).max())
