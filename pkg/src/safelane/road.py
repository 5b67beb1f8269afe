"""Road geometry, obstacle placement, and passing-time estimation.

A road is a lane centerline with piecewise-linear curvature kappa(s) over
arc length s. Heading is the exact integral of curvature (quadratic per
segment); positions are closed-form on straights and constant-curvature
arcs and Gauss-Legendre quadrature on curvature ramps, so geometry queries
are deterministic and accurate to machine precision at highway scales.
"""

import bisect
from dataclasses import dataclass, field

import numpy as np

# 24-point Gauss-Legendre rule on [-1, 1]; enough for machine-precision
# integration of cos/sin of a quadratic over segments of a few hundred m.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class RoadError(ValueError):
    """Raised for malformed geometry or out-of-domain queries."""


@dataclass
class Road:
    """Lane centerline with piecewise-linear curvature.

    knots: increasing arc lengths [m], kappas: curvature at each knot
    [1/m]; curvature interpolates linearly between knots.
    """
    lane_width: float
    knots: np.ndarray
    kappas: np.ndarray
    _headings: np.ndarray = field(init=False, repr=False)
    _positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float).ravel()
        self.kappas = np.asarray(self.kappas, dtype=float).ravel()
        if self.lane_width <= 0.0:
            raise RoadError("lane width must be positive")
        if self.knots.size < 2 or self.knots.size != self.kappas.size:
            raise RoadError("need matching knot and curvature arrays")
        if np.any(np.diff(self.knots) <= 0.0):
            raise RoadError("knots must be strictly increasing")
        if self.knots[0] != 0.0:
            raise RoadError("arc length must start at zero")
        # Cumulative heading at the knots: integral of linear curvature.
        ds = np.diff(self.knots)
        avg = 0.5 * (self.kappas[:-1] + self.kappas[1:])
        self._headings = np.concatenate([[0.0], np.cumsum(avg * ds)])
        # Knot positions by exact segment stepping.
        pos = [np.zeros(2)]
        for i in range(ds.size):
            pos.append(pos[-1] + self._segment_displacement(i, self.knots[i + 1]))
        self._positions = np.vstack(pos)

    @classmethod
    def from_segments(cls, lane_width, segments):
        """Build from [(kind, length, value)] descriptions.

        kind "straight" (value ignored), "arc" (value = signed curvature
        [1/m]) or "ramp" (value = curvature at the segment end; the start
        continues the previous segment).
        """
        knots = [0.0]
        kappas = [0.0]
        for kind, length, value in segments:
            if length <= 0.0:
                raise RoadError("segment length must be positive")
            s_end = knots[-1] + float(length)
            if kind == "straight":
                if abs(kappas[-1]) > 0.0:
                    raise RoadError("straight segment must start at zero "
                                    "curvature (insert a ramp)")
                knots.append(s_end)
                kappas.append(0.0)
            elif kind == "arc":
                if abs(kappas[-1] - float(value)) > 1e-15:
                    raise RoadError("arc segment must start at its own "
                                    "curvature (insert a ramp)")
                knots.append(s_end)
                kappas.append(float(value))
            elif kind == "ramp":
                knots.append(s_end)
                kappas.append(float(value))
            else:
                raise RoadError("unknown segment kind %r" % (kind,))
        return cls(lane_width, np.array(knots), np.array(kappas))

    # -- basic queries ------------------------------------------------------

    @property
    def length(self):
        return float(self.knots[-1])

    def _locate(self, s):
        if s < -1e-9 or s > self.length + 1e-9:
            raise RoadError("arc length %.3f outside road [0, %.3f]"
                            % (s, self.length))
        s = min(max(s, 0.0), self.length)
        i = bisect.bisect_right(self.knots.tolist(), s) - 1
        return min(max(i, 0), self.knots.size - 2), s

    def curvature(self, s):
        i, s = self._locate(s)
        s0, s1 = self.knots[i], self.knots[i + 1]
        t = (s - s0) / (s1 - s0)
        return float((1.0 - t) * self.kappas[i] + t * self.kappas[i + 1])

    def curvature_slope(self, s):
        i, s = self._locate(s)
        return float((self.kappas[i + 1] - self.kappas[i])
                     / (self.knots[i + 1] - self.knots[i]))

    def heading(self, s):
        """Tangent angle psi_r(s): exact integral of the curvature."""
        i, s = self._locate(s)
        s0 = self.knots[i]
        k0 = self.kappas[i]
        slope = (self.kappas[i + 1] - k0) / (self.knots[i + 1] - s0)
        ds = s - s0
        return float(self._headings[i] + k0 * ds + 0.5 * slope * ds * ds)

    def position(self, s):
        """Centerline point (X, Y) at arc length s."""
        i, s = self._locate(s)
        return self._positions[i] + self._segment_displacement(i, s)

    def _segment_displacement(self, i, s):
        """Displacement from knot i to arc length s inside segment i."""
        s0 = self.knots[i]
        ds = s - s0
        if ds == 0.0:
            return np.zeros(2)
        psi0 = self._headings[i]
        k0, k1 = self.kappas[i], self.kappas[i + 1]
        if k0 == k1:
            if k0 == 0.0:
                return ds * np.array([np.cos(psi0), np.sin(psi0)])
            psi1 = psi0 + k0 * ds
            return np.array([(np.sin(psi1) - np.sin(psi0)) / k0,
                             -(np.cos(psi1) - np.cos(psi0)) / k0])
        slope = (k1 - k0) / (self.knots[i + 1] - s0)
        # Clothoid piece: integrate cos/sin of the quadratic heading.
        u = 0.5 * ds * (_GL_X + 1.0)
        psi = psi0 + k0 * u + 0.5 * slope * u * u
        w = 0.5 * ds * _GL_W
        return np.array([np.dot(w, np.cos(psi)), np.dot(w, np.sin(psi))])

    def left_normal(self, s):
        psi = self.heading(s)
        return np.array([-np.sin(psi), np.cos(psi)])

    def lane_boundaries(self, s_grid):
        """Sampled left/right lane edge polylines for plotting."""
        pts = np.array([self.position(s) for s in s_grid])
        nrm = np.array([self.left_normal(s) for s in s_grid])
        half = 0.5 * self.lane_width
        return pts + half * nrm, pts - half * nrm

    def max_abs_curvature(self):
        return float(np.max(np.abs(self.kappas)))

    def max_abs_curvature_slope(self):
        return float(np.max(np.abs(np.diff(self.kappas) / np.diff(self.knots))))


def reference_at_arclength(road, s, speed):
    """(psi_r, psi_dot_ref) at arc length s for a given constant speed."""
    return road.heading(s), speed * road.curvature(s)


# ---------------------------------------------------------------------------
# Obstacle
# ---------------------------------------------------------------------------

@dataclass
class Obstacle:
    """Disk obstacle beside (or into) the lane.

    edge_offset is the signed lateral offset, left of centerline positive,
    of the disk's leftmost point: the lateral bound a passing vehicle must
    stay left of. The disk radius already encodes the car half-width. The
    geometric center sits at edge_offset - radius, which the convention
    check keeps right of the centerline.
    """
    arc_position: float          # centerline arc length abreast of center [m]
    radius: float                # inflated disk radius [m]
    edge_offset: float           # leftmost-point lateral offset [m]
    detect_distance: float       # center-to-center trigger distance [m]
    center: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.radius <= 0.0:
            raise RoadError("obstacle radius must be positive")
        if self.detect_distance <= self.radius * np.sqrt(2.0):
            raise RoadError("detection distance too small for the trigger "
                            "threshold to exceed the radius")
        if self.edge_offset >= self.radius:
            raise RoadError("obstacle center must lie right of the "
                            "centerline (edge_offset < radius)")

    @property
    def detect_threshold(self):
        """delta_2: trigger level in the squared-distance measure."""
        return float(np.sqrt(self.detect_distance ** 2 - self.radius ** 2))

    def place(self, road):
        """Fix the world center from road geometry; returns self."""
        lateral_center = self.edge_offset - self.radius
        self.center = road.position(self.arc_position) \
            + road.left_normal(self.arc_position) * lateral_center
        return self

    def squared_distance(self, X, Y):
        """d = |p - center|^2 - r^2; negative means collision."""
        if self.center is None:
            raise RoadError("obstacle not placed on a road yet")
        dx = X - self.center[0]
        dy = Y - self.center[1]
        return dx * dx + dy * dy - self.radius * self.radius

    @property
    def pass_end_arclength(self):
        """Arc length abreast of the disk's far edge."""
        return self.arc_position + self.radius


def estimate_passing_time(road, s_now, s_obs_end, speed, tol=1e-6):
    """Time to traverse a chord equal to the along-path obstacle distance.

    Solves for the smallest T > 0 with |position(s_now + speed*T) -
    position(s_now)| equal to d_path = s_obs_end - s_now by bisection on
    [0, 10 d_path / speed] to ``tol`` seconds. On a straight road this is
    exactly d_path / speed; curvature lengthens it slightly because the
    chord of an arc is shorter than the arc.
    """
    d_path = s_obs_end - s_now
    if d_path <= 0.0:
        raise RoadError("obstacle end must lie ahead of the vehicle")
    if speed <= 0.0:
        raise RoadError("speed must be positive")
    p0 = road.position(s_now)

    def chord(T):
        return float(np.linalg.norm(road.position(s_now + speed * T) - p0))

    lo = 0.0
    hi = d_path / speed
    hi_cap = min(10.0 * d_path / speed, (road.length - s_now) / speed)
    while chord(hi) < d_path:
        if hi >= hi_cap - 1e-12:
            raise RoadError("road too short or too curved to realize the "
                            "passing chord")
        hi = min(hi * 1.25, hi_cap)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chord(mid) < d_path:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
