"""Profile curves, the conformal coordinate map, and grid construction.

A surface of revolution is generated by a planar profile curve
(f0(v), h0(v)): f0 is the distance from the axis, h0 the height.  The
flow works in time-independent isothermal coordinates

    xi(v) = integral_q^v sqrt(f0'^2 + h0'^2) / f0 ds

under which the induced metric becomes u (dxi^2 + dtheta^2) with
u = f0^2.  Poles (f0 = 0) sit at xi = -inf / +inf, so sphere-like
domains are truncated at a configurable half-width L.

"Toroidal" here means the radius f0 and the height slope h0' repeat
with a common period; the height itself may climb from cell to cell,
as it does on the periodic cover of a torus.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import numerics
from .errors import (
    ConfigError,
    InteriorPole,
    InversionFailure,
    NegativeRadius,
    NonImmersed,
    PoleEvaluation,
    TruncationTooWide,
    UnsupportedTopology,
    WrongTopology,
)

__all__ = [
    "Topology",
    "FluxAtInfinity",
    "Periodic",
    "ProfileCurve",
    "IsothermalGrid",
    "build_profile",
    "build_grid",
    "xi_of_v",
    "invert_xi",
    "period_Q",
    "sample_u0",
]

QUAD_TOL = 1e-12          # absolute tolerance per quadrature subinterval
BISECT_VTOL = 1e-13       # bisection tolerance in the curve parameter
U0_FLOOR = 1e-14          # sample_u0 refuses initial data below this


class Topology(Enum):
    SPHERE_LIKE = "sphere-like"   # two poles, one at each domain endpoint
    TOROIDAL = "toroidal"         # periodic cell, radius bounded away from 0
    BOUNDED = "bounded"           # no poles, not periodic


@dataclass(frozen=True)
class FluxAtInfinity:
    """Flux boundary data: u_xi/u -> ``left`` at the left end, -> -``right``
    at the right end.  The pair (2, 2) is the one that keeps poles smooth."""
    left: float = 2.0
    right: float = 2.0


@dataclass(frozen=True)
class Periodic:
    """Periodic boundary over one cell of length ``period`` in xi."""
    period: float


@dataclass
class ProfileCurve:
    """A validated generating curve plus its coordinate-map machinery.

    Treat instances as immutable after construction; the only mutation is
    the lazily built cumulative xi table, which is idempotent.
    """

    v_domain: tuple[float, float]
    f0: Callable[[np.ndarray], np.ndarray]
    h0: Callable[[np.ndarray], np.ndarray]
    df0: Callable[[np.ndarray], np.ndarray]
    dh0: Callable[[np.ndarray], np.ndarray]
    topology: Topology
    poles: tuple[float, ...] = ()
    period: Optional[float] = None
    basepoint: Optional[float] = None
    label: str = "profile"
    _table: Optional[tuple[np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False)
    _period_xi: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.basepoint is None:
            if self.topology is Topology.TOROIDAL:
                self.basepoint = self.v_domain[0]
            else:
                self.basepoint = 0.5 * (self.v_domain[0] + self.v_domain[1])
        _validate_curve(self)

    def speed(self, v):
        return np.hypot(self.df0(v), self.dh0(v))

    def xi_rate(self, v):
        """d(xi)/dv = sqrt(f0'^2 + h0'^2) / f0."""
        return self.speed(v) / self.f0(v)

    # -- cumulative table -------------------------------------------------

    def _breakpoints(self):
        lo, hi = self.v_domain
        width = hi - lo
        pts = list(np.linspace(lo, hi, 257))
        if self.topology is Topology.SPHERE_LIKE:
            # geometric ladders toward each pole; xi grows ~ log(offset)
            for k in range(1, 14):
                off = width * 10.0 ** (-k - 1)
                pts.append(lo + off)
                pts.append(hi - off)
            pts = [p for p in pts if lo < p < hi]
        pts.append(self.basepoint)
        pts = np.unique(np.asarray(pts, dtype=float))
        if self.topology is Topology.SPHERE_LIKE:
            pts = pts[(pts > lo) & (pts < hi)]
        return pts

    def xi_table(self):
        """Breakpoints v_i and cumulative xi(v_i), anchored xi(q) = 0."""
        if self._table is None:
            pts = self._breakpoints()
            rate = self.xi_rate
            seg = np.empty(pts.size)
            seg[0] = 0.0
            for i in range(1, pts.size):
                seg[i] = numerics.adaptive_simpson(
                    rate, pts[i - 1], pts[i], tol=QUAD_TOL)
            cum = np.cumsum(seg)
            iq = int(np.searchsorted(pts, self.basepoint))
            # basepoint is one of the breakpoints by construction
            cum -= cum[iq]
            self._table = (pts, cum)
        return self._table


@dataclass(frozen=True)
class IsothermalGrid:
    """Uniform xi discretization tied to one profile curve."""

    xi: np.ndarray
    spacing: float
    bc: FluxAtInfinity | Periodic
    basepoint: float
    topology: Topology

    def __post_init__(self):
        steps = np.diff(self.xi)
        if steps.size and not np.allclose(steps, self.spacing, rtol=1e-12, atol=0.0):
            raise ConfigError("grid spacing is not uniform")
        if isinstance(self.bc, Periodic):
            span = self.xi[-1] - self.xi[0]
            want = self.bc.period - self.spacing
            if not math.isclose(span, want, rel_tol=1e-12):
                raise ConfigError("periodic grid must span exactly one period")

    @property
    def n(self):
        return self.xi.size

    @property
    def periodic(self):
        return isinstance(self.bc, Periodic)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _validate_curve(curve: ProfileCurve, samples: int = 2049):
    lo, hi = curve.v_domain
    if not hi > lo:
        raise ConfigError("empty parameter domain")
    v = np.linspace(lo, hi, samples)
    f = np.asarray(curve.f0(v), dtype=float)
    scale = float(np.max(np.abs(f))) or 1.0
    if np.any(f < -1e-12 * scale):
        raise NegativeRadius("radius samples below zero")
    speed = np.asarray(curve.speed(v), dtype=float)
    smax = float(np.max(speed))
    if smax <= 0.0 or np.any(speed <= 1e-10 * smax):
        raise NonImmersed("f0' and h0' vanish together somewhere on the domain")

    zero = f <= 1e-12 * scale
    interior_zero = zero[1:-1]
    if np.any(interior_zero):
        raise InteriorPole("radius vanishes away from the domain endpoints")

    if curve.topology is Topology.SPHERE_LIKE:
        if len(curve.poles) != 2 or not (
            math.isclose(curve.poles[0], lo) and math.isclose(curve.poles[1], hi)
        ):
            raise UnsupportedTopology(
                "sphere-like curves need exactly the two endpoint poles")
        for p in curve.poles:
            if abs(float(curve.df0(p))) <= 1e-10 * smax:
                raise NonImmersed(f"radius derivative vanishes at the pole v={p!r}")
    else:
        if bool(zero[0]) != bool(zero[-1]):
            raise UnsupportedTopology(
                "one-pole unbounded surfaces are not supported")
        if zero[0] and zero[-1]:
            raise UnsupportedTopology(
                "curve has endpoint poles but is not tagged sphere-like")

    if curve.topology is Topology.TOROIDAL:
        if curve.period is None or curve.period <= 0.0:
            raise WrongTopology("toroidal curve needs a positive period")
        if float(np.min(f)) <= 1e-12 * scale:
            raise InteriorPole("toroidal radius must stay positive")
        # radius and height slope must repeat over the period
        vper = np.linspace(lo, lo + curve.period, 257)
        if not np.allclose(curve.f0(vper), curve.f0(vper + curve.period),
                           rtol=1e-8, atol=1e-10 * scale):
            raise WrongTopology("radius is not periodic with the stated period")
        if not np.allclose(curve.dh0(vper), curve.dh0(vper + curve.period),
                           rtol=1e-8, atol=1e-10 * smax):
            raise WrongTopology("height slope is not periodic with the stated period")

    q = curve.basepoint
    if not (lo <= q <= hi) or abs(float(curve.f0(q))) <= 1e-12 * scale:
        raise ConfigError("basepoint must satisfy f0(q) != 0 inside the domain")


# ---------------------------------------------------------------------------
# built-in surfaces and sample tables
# ---------------------------------------------------------------------------

def _sphere_curve():
    return ProfileCurve(
        v_domain=(-0.5 * math.pi, 0.5 * math.pi),
        f0=np.cos, h0=np.sin,
        df0=lambda v: -np.sin(v), dh0=np.cos,
        topology=Topology.SPHERE_LIKE,
        poles=(-0.5 * math.pi, 0.5 * math.pi),
        label="sphere",
    )


def _torus_curve(a: float, b: float):
    if not (a > 0.0 and b > 0.0):
        raise ConfigError("torus needs positive radii a and b")
    return ProfileCurve(
        v_domain=(0.0, 2.0 * math.pi),
        f0=lambda v: a + b * np.cos(v),
        h0=lambda v: b * np.sin(v),
        df0=lambda v: -b * np.sin(v),
        dh0=lambda v: b * np.cos(v),
        topology=Topology.TOROIDAL,
        period=2.0 * math.pi,
        label=f"torus(a={a:g},b={b:g})",
    )


def _cylinder_curve(radius: float, length: float):
    if not (radius > 0.0 and length > 0.0):
        raise ConfigError("cylinder needs positive radius and length")
    return ProfileCurve(
        v_domain=(0.0, length),
        f0=lambda v: np.full_like(np.asarray(v, dtype=float), radius),
        h0=lambda v: np.asarray(v, dtype=float),
        df0=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
        dh0=lambda v: np.ones_like(np.asarray(v, dtype=float)),
        topology=Topology.BOUNDED,
        label=f"cylinder(r={radius:g},len={length:g})",
    )


def _parse_kv(args: str, names: tuple[str, ...]) -> dict[str, float]:
    out = {}
    for part in args.split(","):
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in names:
            raise ConfigError(f"unknown parameter {key!r}")
        try:
            out[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad number for {key!r}: {val!r}") from exc
    missing = [n for n in names if n not in out]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}")
    return out


def _load_table(path: str):
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != ["v", "f0", "h0"]:
                raise ConfigError(f"{path}: expected header 'v,f0,h0'")
            for row in reader:
                if not row or not "".join(row).strip():
                    continue
                rows.append([float(x) for x in row])
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry: {exc}") from exc
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3 or data.shape[0] < 4:
        raise ConfigError(f"{path}: need at least 4 rows of v,f0,h0")
    v = data[:, 0]
    if np.any(np.diff(v) <= 0.0):
        raise ConfigError(f"{path}: v column must be strictly increasing")
    return v, data[:, 1], data[:, 2]


def _curve_from_table(v, f, h, label):
    scale = float(np.max(np.abs(f))) or 1.0
    if np.any(f < -1e-12 * scale):
        raise NegativeRadius("radius samples below zero")
    zero = np.abs(f) <= 1e-12 * scale
    if np.any(zero[1:-1]):
        raise InteriorPole("radius vanishes away from the table endpoints")

    closed = (
        not zero[0] and not zero[-1]
        and math.isclose(f[0], f[-1], rel_tol=1e-9, abs_tol=1e-12 * scale)
        and math.isclose(h[0], h[-1], rel_tol=1e-9, abs_tol=1e-12 * scale)
    )
    if closed:
        period = float(v[-1] - v[0])
        fs = CubicSpline(v, f, bc_type="periodic")
        hs = CubicSpline(v, h, bc_type="periodic")
        wrap = lambda spl: _periodic_eval(spl, float(v[0]), period)
        return ProfileCurve(
            v_domain=(float(v[0]), float(v[-1])),
            f0=wrap(fs), h0=wrap(hs),
            df0=wrap(fs.derivative()), dh0=wrap(hs.derivative()),
            topology=Topology.TOROIDAL,
            period=period,
            label=label,
        )

    fs = PchipInterpolator(v, f)
    hs = PchipInterpolator(v, h)
    if zero[0] and zero[-1]:
        topo = Topology.SPHERE_LIKE
        poles = (float(v[0]), float(v[-1]))
    elif zero[0] or zero[-1]:
        raise UnsupportedTopology("one-pole unbounded surfaces are not supported")
    else:
        topo = Topology.BOUNDED
        poles = ()
    return ProfileCurve(
        v_domain=(float(v[0]), float(v[-1])),
        f0=fs, h0=hs,
        df0=fs.derivative(), dh0=hs.derivative(),
        topology=topo,
        poles=poles,
        label=label,
    )


def _periodic_eval(spline, v0, period):
    """Evaluate a closed spline through its periodic extension."""
    def call(x):
        x = np.asarray(x, dtype=float)
        return spline(v0 + np.mod(x - v0, period))
    return call


def build_profile(spec: str) -> ProfileCurve:
    """Build a validated profile curve from a surface spec string.

    Accepted forms: ``sphere``, ``torus:a=<f>,b=<f>``,
    ``cylinder:r=<f>,len=<f>`` and ``csv:<path>`` (header ``v,f0,h0``).
    """
    spec = spec.strip()
    name, _, args = spec.partition(":")
    name = name.strip().lower()
    if name == "sphere":
        if args:
            raise ConfigError("sphere takes no parameters")
        return _sphere_curve()
    if name == "torus":
        kv = _parse_kv(args, ("a", "b"))
        return _torus_curve(kv["a"], kv["b"])
    if name == "cylinder":
        kv = _parse_kv(args, ("r", "len"))
        return _cylinder_curve(kv["r"], kv["len"])
    if name == "csv":
        if not args:
            raise ConfigError("csv spec needs a path")
        v, f, h = _load_table(args)
        return _curve_from_table(v, f, h, label=Path(args).stem)
    raise ConfigError(f"unknown surface spec {spec!r}")


# ---------------------------------------------------------------------------
# coordinate map
# ---------------------------------------------------------------------------

def xi_of_v(curve: ProfileCurve, v: float) -> float:
    """The conformal coordinate xi(v), by adaptive quadrature from q."""
    lo, hi = curve.v_domain
    shift = 0.0
    if curve.topology is Topology.TOROIDAL:
        period = curve.period
        k = math.floor((v - lo) / period)
        v = v - k * period
        shift = k * period_Q(curve)
    else:
        for p in curve.poles:
            if v == p:
                raise PoleEvaluation(f"xi diverges at the pole v={p!r}")
        if not (lo <= v <= hi):
            raise InversionFailure(f"v={v!r} outside the parameter domain")
    pts, cum = curve.xi_table()
    if curve.topology is Topology.SPHERE_LIKE and not (pts[0] <= v <= pts[-1]):
        raise TruncationTooWide(
            "parameter value too close to a pole for the tabulated map")
    j = int(np.searchsorted(pts, v))
    j = max(1, min(j, pts.size - 1))
    base = pts[j - 1]
    return float(cum[j - 1]
                 + numerics.adaptive_simpson(curve.xi_rate, base, v, tol=QUAD_TOL)
                 + shift)


def period_Q(curve: ProfileCurve) -> float:
    """Length Q of one period cell in xi for a toroidal curve."""
    if curve.topology is not Topology.TOROIDAL:
        raise WrongTopology("period is defined for toroidal curves only")
    if curve._period_xi is None:
        lo = curve.v_domain[0]
        curve._period_xi = numerics.adaptive_simpson(
            curve.xi_rate, lo, lo + curve.period, tol=QUAD_TOL)
    return curve._period_xi


def invert_xi(curve: ProfileCurve, xi: float) -> float:
    """Parameter value v with xi(v) = xi: bisection plus one Newton polish."""
    shift_v = 0.0
    if curve.topology is Topology.TOROIDAL:
        q_cell = period_Q(curve)
        k = math.floor(xi / q_cell)
        xi = xi - k * q_cell
        shift_v = k * curve.period
    pts, cum = curve.xi_table()
    if not (cum[0] <= xi <= cum[-1]):
        # the periodic reduction uses an independently integrated Q, so the
        # seam can land a rounding step past the table; snap it back
        slack = 1e-9 * max(1.0, abs(float(cum[0])), abs(float(cum[-1])))
        if cum[0] - slack <= xi <= cum[-1] + slack:
            xi = min(max(xi, float(cum[0])), float(cum[-1]))
        else:
            raise TruncationTooWide(
                f"xi={xi!r} outside the tabulated range "
                f"[{cum[0]:.3g}, {cum[-1]:.3g}]")
    j = int(np.searchsorted(cum, xi))
    j = max(1, min(j, pts.size - 1))
    lo, hi = float(pts[j - 1]), float(pts[j])
    xi_lo = float(cum[j - 1])
    # bisection; integrate only across the shrinking left gap
    for _ in range(200):
        if hi - lo <= BISECT_VTOL:
            break
        mid = 0.5 * (lo + hi)
        xi_mid = xi_lo + numerics.adaptive_simpson(
            curve.xi_rate, lo, mid, tol=QUAD_TOL)
        if xi_mid < xi:
            lo, xi_lo = mid, xi_mid
        else:
            hi = mid
    else:
        raise InversionFailure("bisection failed to converge")
    v = 0.5 * (lo + hi)
    # one Newton polish with the analytic rate
    residual = (xi_lo
                + numerics.adaptive_simpson(curve.xi_rate, lo, v, tol=QUAD_TOL)
                - xi)
    rate = float(curve.xi_rate(v))
    if rate > 0.0 and np.isfinite(rate):
        v = v - residual / rate
    v = min(max(v, float(pts[0])), float(pts[-1]))
    return v + shift_v


# ---------------------------------------------------------------------------
# grids and initial data
# ---------------------------------------------------------------------------

def build_grid(curve: ProfileCurve, n: int, *, half_width: float = 8.0,
               flux: Optional[tuple[float, float]] = None) -> IsothermalGrid:
    """Uniform grid matching the curve's topology.

    Sphere-like curves get a truncated symmetric grid on [-L, L] with flux
    boundary data (default the smooth-pole pair (2, 2)).  Toroidal curves
    get one period cell.  Bounded curves span their full finite xi range,
    with flux data read off the initial profile unless overridden.
    """
    if n < 16:
        raise ConfigError("need at least 16 grid nodes")
    if curve.topology is Topology.SPHERE_LIKE:
        if half_width <= 0.0:
            raise ConfigError("half width must be positive")
        pair = (2.0, 2.0) if flux is None else flux
        xi = np.linspace(-half_width, half_width, n)
        return IsothermalGrid(
            xi=xi, spacing=float(xi[1] - xi[0]),
            bc=FluxAtInfinity(float(pair[0]), float(pair[1])),
            basepoint=curve.basepoint, topology=curve.topology)
    if curve.topology is Topology.TOROIDAL:
        q_cell = period_Q(curve)
        dxi = q_cell / n
        xi = np.arange(n) * dxi
        return IsothermalGrid(
            xi=xi, spacing=dxi, bc=Periodic(q_cell),
            basepoint=curve.basepoint, topology=curve.topology)
    # bounded: finite xi range, flux data from the profile ends
    lo, hi = curve.v_domain
    xi_lo = xi_of_v(curve, lo)
    xi_hi = xi_of_v(curve, hi)
    if flux is None:
        a = 2.0 * float(curve.df0(lo)) / float(curve.speed(lo))
        b = -2.0 * float(curve.df0(hi)) / float(curve.speed(hi))
        flux = (a, b)
    xi = np.linspace(xi_lo, xi_hi, n)
    return IsothermalGrid(
        xi=xi, spacing=float(xi[1] - xi[0]),
        bc=FluxAtInfinity(float(flux[0]), float(flux[1])),
        basepoint=curve.basepoint, topology=curve.topology)


def sample_u0(curve: ProfileCurve, grid: IsothermalGrid, *,
              floor: float = U0_FLOOR):
    """Initial conformal factor u0(xi_i) = f0(v(xi_i))^2 on the grid."""
    if grid.periodic != (curve.topology is Topology.TOROIDAL):
        raise WrongTopology("grid boundary type does not match the curve")
    v = np.array([invert_xi(curve, float(x)) for x in grid.xi])
    u0 = np.asarray(curve.f0(v), dtype=float) ** 2
    if not np.all(np.isfinite(u0)):
        raise InversionFailure("initial data contains non-finite values")
    if np.any(u0 < floor):
        raise TruncationTooWide(
            f"initial data underflows the floor {floor:g}; reduce the "
            "truncation half-width")
    from .logdiff import FlowState, StepStats
    return FlowState(t=0.0, u=u0, grid=grid, stats=StepStats())
