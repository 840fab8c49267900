"""Limiting spectra of large sample covariance matrices with discrete population spectra.

Everything here revolves around the companion Stieltjes transform v(z),
the unique upper-half-plane root of the fixed-point equation

    -1/v = z - gamma * sum_i w_i t_i / (1 + t_i v),

where ``sum_i w_i delta_{t_i}`` is the population spectral measure and
gamma the dimension-to-sample aspect ratio.  The module solves this
equation off and on the real axis, locates the support of the limiting
eigenvalue distribution from the real inverse map, evaluates v on dense
in-support grids, and integrates moments of the limiting distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import AtomicMeasure

__all__ = [
    "SupportSet",
    "StieltjesCurve",
    "SilversteinError",
    "solve_silverstein",
    "silverstein_residual",
    "derivative_map",
    "support_intervals",
    "stieltjes_grid",
    "esd_density",
    "esd_moment",
    "esd_expectation",
    "forward_moments",
    "solve_real_outside",
]

# residual targets: Newton aims for machine precision, a grid point is
# reported converged only when it lands below the contract tolerance
_NEWTON_TOL = 1e-13
_CONVERGED_RESID = 1e-8


class SilversteinError(RuntimeError):
    """Fixed-point solve failed to converge or hit a pole/edge."""


def _check_bulk(H: AtomicMeasure) -> None:
    if H.is_zero_mass_at_origin():
        raise ValueError("population spectrum delta_0 is degenerate and not supported")


def _sums(H: AtomicMeasure, v: complex) -> tuple[complex, complex]:
    """First and second integrands of the fixed-point equation at v."""
    den = 1.0 + H.atoms * v
    s1 = np.sum(H.weights * H.atoms / den)
    s2 = np.sum(H.weights * H.atoms**2 / den**2)
    return s1, s2


def silverstein_residual(H: AtomicMeasure, gamma: float, z: complex, v: complex) -> complex:
    """Defect of v in the fixed-point equation at z (zero at a solution)."""
    s1, _ = _sums(H, v)
    return -1.0 / v - z + gamma * s1


def derivative_map(H: AtomicMeasure, gamma: float, v: complex) -> complex:
    """Closed-form dv/dz expressed through v itself.

    Differentiating the fixed-point equation in z gives
    ``v'(z) = [1/v^2 - gamma * sum w t^2/(1+tv)^2]^-1``.  The denominator
    vanishes exactly at support edges, where the derivative blows up.
    """
    if v == 0:
        raise ValueError("derivative map undefined at v = 0")
    den = 1.0 + H.atoms * v
    if np.any(np.abs(den) < 1e-14):
        raise ValueError("derivative map evaluated at a pole 1 + t*v = 0")
    _, s2 = _sums(H, v)
    d = 1.0 / v**2 - gamma * s2
    if abs(d) < 1e-14:
        raise SilversteinError("derivative map denominator vanished (support edge)")
    return 1.0 / d


def _newton(H: AtomicMeasure, gamma: float, z: complex, v0: complex, tol: float = _NEWTON_TOL,
            max_iter: int = 80) -> tuple[complex, float]:
    """Newton iteration on the fixed-point defect, damped to stay in C+."""
    v = v0
    with np.errstate(all="ignore"):
        best_v, best_r = v, abs(silverstein_residual(H, gamma, z, v))
        for _ in range(max_iter):
            r = silverstein_residual(H, gamma, z, v)
            ar = abs(r)
            if not math.isfinite(ar):
                v = best_v
                break
            if ar < best_r:
                best_v, best_r = v, ar
            if ar < tol:
                return v, ar
            den = 1.0 + H.atoms * v
            rp = 1.0 / v**2 - gamma * np.sum(H.weights * H.atoms**2 / den**2)
            if rp == 0 or not np.isfinite(rp):
                break
            step = r / rp
            vn = v - step
            # for z strictly above the axis the root lies in C+: damp any
            # step that would cross into the lower half plane
            k = 0
            while z.imag > 0 and vn.imag <= 0 and k < 50:
                step *= 0.5
                vn = v - step
                k += 1
            if vn == v or not np.isfinite(abs(vn)):
                break
            v = vn
    return best_v, best_r


def _fixed_point(H: AtomicMeasure, gamma: float, z: complex, v0: complex, n_iter: int = 60) -> complex:
    v = v0
    for _ in range(n_iter):
        s1, _ = _sums(H, v)
        denom = -z + gamma * s1
        if denom == 0:
            break
        v = 1.0 / denom
    return v


def solve_silverstein(H: AtomicMeasure, gamma: float, z: complex, v0: complex | None = None,
                      tol: float = 1e-12) -> complex:
    """Solve the fixed-point equation for v(z).

    For Im(z) > 0 returns the unique root in the upper half plane.  For
    real z the caller must know that z lies outside the support (use
    :func:`solve_real_outside` or an imaginary-offset limit otherwise).

    Raises
    ------
    SilversteinError
        If the iteration stalls above the requested residual ``tol``.
    """
    _check_bulk(H)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    z = complex(z)
    if v0 is None:
        v0 = -1.0 / z if z != 0 else complex(0.0, 1.0)
        if z.imag > 0 and v0.imag <= 0:
            v0 = complex(v0.real, 1e-8)
        v0 = _fixed_point(H, gamma, z, v0)
    v, resid = _newton(H, gamma, z, v0)
    if resid > tol:
        # one retry from a fresh contraction run before giving up
        v_retry = _fixed_point(H, gamma, z, -1.0 / z + 1e-6j if z != 0 else 1e-6j, 200)
        v_retry, resid_retry = _newton(H, gamma, z, v_retry)
        if resid_retry < resid:
            v, resid = v_retry, resid_retry
    if resid > tol:
        raise SilversteinError(
            f"no convergence at z={z!r}: residual {resid:.3e} > {tol:.1e}; "
            "retry with a larger imaginary offset"
        )
    if z.imag > 0 and v.imag < 0:
        raise SilversteinError(f"root left the upper half plane at z={z!r}")
    return v


# ----------------------------------------------------------------------
# support of the limiting distribution
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SupportSet:
    """Closed support intervals of the limiting eigenvalue distribution.

    ``edge_v[j]`` holds the real critical values of the inverse map at the
    two endpoints of ``intervals[j]``; they give phase-transition
    thresholds via s = -1/v.  ``spike_windows`` lists the open intervals
    of population-spike locations whose sample spike escapes the bulk,
    each paired with the gap of the complement it maps into.
    """

    intervals: tuple[tuple[float, float], ...]
    enclosing_interval: tuple[float, float]
    edge_v: tuple[tuple[float, float], ...] = field(default=())
    spike_windows: tuple[tuple[float, float, float, float], ...] = field(default=())

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(l - tol <= x <= u + tol for l, u in self.intervals)

    def distance(self, x: float) -> float:
        """Distance from x to the union of support intervals (0 inside)."""
        best = math.inf
        for l, u in self.intervals:
            if l <= x <= u:
                return 0.0
            best = min(best, abs(x - l), abs(x - u))
        return best

    @property
    def upper_pt_threshold(self) -> float:
        """Population-spike threshold above the top edge, -1/v(u_J)."""
        return -1.0 / self.edge_v[-1][1]

    def to_dict(self) -> dict:
        return {
            "intervals": [list(iv) for iv in self.intervals],
            "enclosing_interval": list(self.enclosing_interval),
        }


def _inverse_map(H: AtomicMeasure, gamma: float):
    atoms = H.atoms
    weights = H.weights

    def x_of_v(v: float) -> float:
        return -1.0 / v + gamma * float(np.sum(weights * atoms / (1.0 + atoms * v)))

    def xp_of_v(v: float) -> float:
        return 1.0 / v**2 - gamma * float(np.sum(weights * atoms**2 / (1.0 + atoms * v) ** 2))

    return x_of_v, xp_of_v


def _bisect_sign_change(f, a: float, b: float, fa_sign: float, max_iter: int = 200) -> float:
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if math.copysign(1.0, fm) == fa_sign:
            a = m
        else:
            b = m
        if abs(b - a) <= 1e-13 * max(1.0, abs(m)):
            break
    return 0.5 * (a + b)


def support_intervals(H: AtomicMeasure, gamma: float, samples_per_interval: int = 800) -> SupportSet:
    """Support of the limiting distribution from the real inverse map.

    On the real v-line, x(v) = -1/v + gamma * sum w t/(1+tv) is increasing
    exactly on the complement of the support image.  Critical points of
    x(v) between consecutive poles v = -1/t_i are located by bisection on
    x'(v); the images of the increasing branches are the gaps.
    """
    _check_bulk(H)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x_of_v, xp_of_v = _inverse_map(H, gamma)
    pos = H.atoms > 0
    poles = np.sort(-1.0 / H.atoms[pos])
    t_max = float(H.atoms.max())
    upper_bound = (1.0 + math.sqrt(gamma)) ** 2 * t_max

    # v-intervals between consecutive poles, plus the two unbounded ends
    # and the positive axis (poles are all negative, 0 is always a pole)
    segments: list[tuple[float, float]] = [(-math.inf, poles[0])]
    for i in range(len(poles) - 1):
        segments.append((poles[i], poles[i + 1]))
    segments.append((poles[-1], 0.0))
    segments.append((0.0, math.inf))

    def sample(lo: float, hi: float) -> np.ndarray:
        if math.isinf(lo):
            off = np.geomspace(1e-9 * max(abs(hi), 1e-12), 1e5 * max(1.0, abs(hi)), samples_per_interval)
            return (hi - off)[::-1]
        if math.isinf(hi):
            base = 1.0 / t_max
            off = np.geomspace(1e-12 * base, 1e8 * base, samples_per_interval)
            return lo + off
        width = hi - lo
        u = np.linspace(0.0, 1.0, samples_per_interval)[1:-1]
        clustered = 0.5 * (1.0 + np.tanh(3.0 * (2.0 * u - 1.0)) / math.tanh(3.0))
        return lo + clustered * width

    branches: list[tuple[float, float]] = []
    for lo, hi in segments:
        vv = sample(lo, hi)
        fp = np.array([xp_of_v(v) for v in vv])
        signs = np.sign(fp)
        zeros: list[float] = []
        for i in range(len(vv) - 1):
            if signs[i] != 0 and signs[i] * signs[i + 1] < 0:
                zeros.append(_bisect_sign_change(xp_of_v, vv[i], vv[i + 1], signs[i]))
        pts = [lo, *zeros, hi]
        for i in range(len(pts) - 1):
            a, b = pts[i], pts[i + 1]
            if math.isinf(a):
                probe = b - 2.0 * max(abs(b), 1.0)
            elif math.isinf(b):
                probe = a + 2.0 * max(abs(a), 1.0)
            else:
                probe = 0.5 * (a + b)
            if xp_of_v(probe) > 0:
                branches.append((a, b))

    # image of each increasing branch is a gap in the support
    complement: list[tuple[float, float, float, float]] = []  # (x_lo, x_hi, v_lo, v_hi)
    for a, b in branches:
        xa = 0.0 if math.isinf(a) else (-math.inf if a == 0.0 else x_of_v(a))
        xb = 0.0 if math.isinf(b) else (math.inf if b == 0.0 else x_of_v(b))
        if xa <= xb:
            complement.append((xa, xb, a, b))
        else:
            complement.append((xb, xa, b, a))
    complement.sort()

    intervals: list[tuple[float, float]] = []
    edge_v: list[tuple[float, float]] = []
    cursor, cursor_v = 0.0, math.nan
    for x_lo, x_hi, v_lo, v_hi in complement:
        if x_hi <= cursor:
            continue
        if x_lo > cursor + 1e-12 * max(1.0, upper_bound):
            intervals.append((cursor, x_lo))
            edge_v.append((cursor_v, v_lo))
        cursor, cursor_v = x_hi, v_hi
    if cursor < upper_bound:
        intervals.append((cursor, upper_bound))
        edge_v.append((cursor_v, math.nan))

    if not intervals:
        raise SilversteinError("support detection produced no intervals")

    # population-spike windows: s = -1/v over each increasing branch.  The
    # map s(v) is increasing on any zero-free v-interval; branches with
    # v >= 0 yield negative s and carry no physical spikes.
    windows: list[tuple[float, float, float, float]] = []
    for x_lo, x_hi, v_lo, v_hi in complement:
        if v_lo >= 0.0:
            continue
        s_lo = 0.0 if math.isinf(v_lo) else -1.0 / v_lo
        s_hi = math.inf if v_hi == 0.0 else -1.0 / v_hi
        windows.append((s_lo, s_hi, x_lo, x_hi))
    windows.sort()

    lo_all = intervals[0][0]
    hi_all = intervals[-1][1]
    margin = 0.05 * (hi_all - lo_all)
    enclosing = (max(0.0, lo_all - margin), hi_all + margin)
    return SupportSet(
        intervals=tuple(intervals),
        enclosing_interval=enclosing,
        edge_v=tuple(edge_v),
        spike_windows=tuple(windows),
    )


def solve_real_limit(H: AtomicMeasure, gamma: float, x: float, v0: complex,
                     eta0: float, eps1: float) -> tuple[complex, float, float]:
    """Real-axis boundary value of v at x inside the support.

    Descends the imaginary offset geometrically from ``eta0`` until
    successive values differ by less than ``eps1``, then polishes with a
    Newton step at eta = 0 unless that jumps to a different root.
    Returns (v, residual at eta=0, last increment of the eta limit).
    """
    v = v0
    v_old = None
    eta = eta0
    increment = math.inf
    for _ in range(60):
        v, _ = _newton(H, gamma, complex(x, eta), v)
        if v_old is not None:
            increment = abs(v - v_old)
            if increment < eps1:
                break
        v_old = v
        eta *= 0.5
    v_polish, resid = _newton(H, gamma, complex(x, 0.0), v)
    guard = max(10.0 * increment, 1e-6) if math.isfinite(increment) else 1e-6
    if v_polish.imag > 0 and abs(v_polish - v) < guard and resid < _CONVERGED_RESID:
        return v_polish, resid, increment
    resid = abs(silverstein_residual(H, gamma, complex(x, 0.0), v))
    return v, resid, increment


def solve_real_outside(H: AtomicMeasure, gamma: float, support: SupportSet, x: float) -> float:
    """Real-axis v(x) for x strictly outside the support.

    Uses the branch structure recorded in the support set: x lies in the
    image of exactly one increasing branch of the inverse map, and v(x) is
    found by bisection of x(v) = x there.
    """
    if support.contains(x):
        raise ValueError(f"x={x} lies inside the support; no real-axis value exists")
    x_of_v, _ = _inverse_map(H, gamma)
    for s_lo, s_hi, x_lo, x_hi in support.spike_windows:
        if x_lo < x < x_hi:
            # v endpoints of this branch: s = -1/v
            v_a = -1.0 / s_lo if s_lo > 0 else -math.inf
            v_b = -1.0 / s_hi if math.isfinite(s_hi) else 0.0
            lo, hi = min(v_a, v_b), max(v_a, v_b)
            # shrink infinite / pole ends to finite brackets
            if math.isinf(lo):
                lo = hi - 1.0
                while x_of_v(lo) > x:
                    lo = hi - 2 * (hi - lo)
            span = hi - lo
            a = lo + 1e-13 * max(span, 1.0)
            b = hi - 1e-13 * max(span, 1.0)
            fa = x_of_v(a) - x
            for _ in range(300):
                m = 0.5 * (a + b)
                fm = x_of_v(m) - x
                if fm == 0:
                    return m
                if math.copysign(1.0, fm) == math.copysign(1.0, fa):
                    a, fa = m, fm
                else:
                    b = m
                if abs(b - a) < 1e-15 * max(1.0, abs(m)):
                    break
            return 0.5 * (a + b)
    raise ValueError(f"x={x} not located in any complement gap")


# ----------------------------------------------------------------------
# dense evaluation on the support
# ----------------------------------------------------------------------

@dataclass
class StieltjesCurve:
    """v and v' on a dense in-support grid, plus the support itself."""

    gamma: float
    grid: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    support: SupportSet
    interval_id: np.ndarray
    cell_widths: np.ndarray
    dropped: list[tuple[float, str]] = field(default_factory=list)
    epsilon: float = 5e-6
    atom_at_zero: float = 0.0  # mass of the limiting law at 0

    @property
    def density(self) -> np.ndarray:
        """Density of the limiting distribution on the grid, Im(v)/(pi*gamma)."""
        return self.v.imag / (math.pi * self.gamma)

    def interval_slice(self, j: int) -> slice:
        idx = np.flatnonzero(self.interval_id == j)
        return slice(idx[0], idx[-1] + 1)

    @property
    def n_intervals(self) -> int:
        return len(self.support.intervals)

    def nearest_index(self, x: float) -> int:
        return int(np.argmin(np.abs(self.grid - x)))

    def to_rows(self):
        """Rows for CSV export: x, re_v, im_v, re_vp, im_vp, in_support."""
        for i in range(self.grid.size):
            yield (
                self.grid[i],
                self.v[i].real,
                self.v[i].imag,
                self.v_prime[i].real,
                self.v_prime[i].imag,
                1,
            )


def stieltjes_grid(H: AtomicMeasure, gamma: float, points_per_interval: int = 1000,
                   epsilon: float = 5e-6, support: SupportSet | None = None) -> StieltjesCurve:
    """Evaluate v on uniform midpoint grids inside each support interval.

    Per grid point the real-axis value is the limit of solves at
    x + i*eta over the geometric sequence eta_0 * 2^-k, stopped once
    successive values differ by less than eps1 = max(1e-8, 1e-2*epsilon);
    a final Newton polish at eta = 0 then drives the residual to machine
    precision.  Points whose residual stays above 1e-8 are dropped and
    recorded, never interpolated.
    """
    if points_per_interval < 16:
        raise ValueError("points_per_interval must be at least 16")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_bulk(H)
    if support is None:
        support = support_intervals(H, gamma)
    eps1 = max(1e-8, 1e-2 * epsilon)
    span = support.intervals[-1][1] - support.intervals[0][0]
    eta0 = 1e-2 * span

    xs_all: list[float] = []
    vs_all: list[complex] = []
    vp_all: list[complex] = []
    ids_all: list[int] = []
    width_all: list[float] = []
    dropped: list[tuple[float, str]] = []

    v_carry: complex | None = None
    for j, (lo, hi) in enumerate(support.intervals):
        cell = (hi - lo) / points_per_interval
        xs = lo + (np.arange(points_per_interval) + 0.5) * cell
        for x in xs:
            try:
                v_start = v_carry if v_carry is not None else None
                v = solve_silverstein(H, gamma, complex(x, eta0), v0=v_start, tol=1e-10)
                v_final, resid_final, _ = solve_real_limit(H, gamma, float(x), v,
                                                           eta0 * 0.5, eps1)
                if resid_final > _CONVERGED_RESID or v_final.imag < -1e-10:
                    dropped.append((float(x), f"residual {resid_final:.2e}"))
                    continue
                vp = derivative_map(H, gamma, v_final)
            except (SilversteinError, ValueError) as exc:
                dropped.append((float(x), str(exc)))
                continue
            xs_all.append(float(x))
            vs_all.append(v_final)
            vp_all.append(vp)
            ids_all.append(j)
            width_all.append(cell)
            v_carry = v_final

    if not xs_all:
        raise SilversteinError("all grid points failed to converge")
    # fraction of zero sample eigenvalues: population null directions plus
    # any rank deficit when the dimension exceeds the sample size
    w0 = float(np.sum(H.weights[H.atoms == 0.0]))
    atom0 = max(0.0, 1.0 - min(1.0 - w0, 1.0 / gamma))
    return StieltjesCurve(
        gamma=gamma,
        grid=np.array(xs_all),
        v=np.array(vs_all),
        v_prime=np.array(vp_all),
        support=support,
        interval_id=np.array(ids_all),
        cell_widths=np.array(width_all),
        dropped=dropped,
        epsilon=epsilon,
        atom_at_zero=atom0,
    )


# ----------------------------------------------------------------------
# integration against the limiting distribution
# ----------------------------------------------------------------------

def esd_density(curve: StieltjesCurve) -> np.ndarray:
    return curve.density


def _interval_quad(curve: StieltjesCurve, values: np.ndarray) -> float:
    """Trapezoid of ``values`` over the grid, intervals closed by zero anchors."""
    total = 0.0
    for j in range(curve.n_intervals):
        sl = curve.interval_slice(j)
        xs = curve.grid[sl]
        ys = values[sl]
        lo, hi = curve.support.intervals[j]
        xs_ext = np.concatenate([[lo], xs, [hi]])
        ys_ext = np.concatenate([[0.0], ys, [0.0]])
        total += float(np.trapezoid(ys_ext, xs_ext))
    return total


def esd_expectation(curve: StieltjesCurve, f, f_at_zero: float | None = None) -> float:
    """Integral of f under the limiting distribution.

    Adds the point mass at zero (1 - 1/gamma for an all-positive bulk
    with gamma > 1, more when the population itself has null directions);
    ``f_at_zero`` overrides f(0) there (mandatory when f is singular at
    the origin).
    """
    vals = f(curve.grid) * curve.density
    total = _interval_quad(curve, vals)
    if curve.atom_at_zero > 0.0:
        fz = f_at_zero if f_at_zero is not None else float(f(np.array([0.0]))[0])
        if not math.isfinite(fz):
            raise ValueError("integrand is singular at 0 where the ESD has an atom")
        total += curve.atom_at_zero * fz
    return total


def esd_moment(curve: StieltjesCurve, H: AtomicMeasure, k: int) -> float:
    """k-th moment of the limiting distribution by grid quadrature.

    The atom at zero present for gamma > 1 contributes nothing for k >= 1.
    The first moment reproduces the population mean and is cross-checked
    against it in the tests.
    """
    if k not in (1, 2, 3, 4):
        raise ValueError("moment order restricted to 1..4")
    if curve.dropped:
        raise ValueError(f"curve has {len(curve.dropped)} non-converged points; refusing to integrate")
    return esd_expectation(curve, lambda x: x**k, f_at_zero=0.0)


def forward_moments(H: AtomicMeasure, gamma: float, k_max: int = 4) -> list[float]:
    """Exact moments m_1..m_k of the limiting distribution.

    Polynomials in the population moments obtained from the non-crossing
    partition expansion of the forward map; exact for any discrete H, so
    usable as an independent check of the quadrature route.
    """
    if not 1 <= k_max <= 4:
        raise ValueError("k_max restricted to 1..4")
    h = [H.moment(k) for k in range(0, 5)]
    out = [h[1]]
    if k_max >= 2:
        out.append(h[2] + gamma * h[1] ** 2)
    if k_max >= 3:
        out.append(h[3] + 3 * gamma * h[2] * h[1] + gamma**2 * h[1] ** 3)
    if k_max >= 4:
        out.append(
            h[4]
            + gamma * (4 * h[3] * h[1] + 2 * h[2] ** 2)
            + 6 * gamma**2 * h[2] * h[1] ** 2
            + gamma**3 * h[1] ** 4
        )
    return out[:k_max]
