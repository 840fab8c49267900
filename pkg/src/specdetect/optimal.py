"""Construction of the best linear spectral statistic for a spiked model.

The driver decides the regime from the alternative spikes: when every
sample spike stays inside the bulk, the test function solves the
first-kind equation and is recovered by integrating its derivative; when
a spike escapes, power is asymptotically full and the statistic is a
narrow Epanechnikov bump at each escaped sample location.  A
scale-invariant variant projects the equation onto the complement of the
identity-direction D(x) = x * density(x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .kernel import (
    REGIME_SUBCRITICAL,
    REGIME_SUPERCRITICAL,
    EfficacyReport,
    KernelMatrix,
    SolvedDerivative,
    assemble_diagreg,
    efficacy_report,
    solve_collocation,
    solve_diagreg,
)
from .measures import AtomicMeasure
from .mp import StieltjesCurve, stieltjes_grid
from .weak_derivative import (
    SignedMeasureCdf,
    SpikeClassification,
    classify_spikes,
    delta_diff,
)

__all__ = [
    "SpikedModel",
    "AlgoConfig",
    "LssFunction",
    "optimal_lss",
    "optimal_ls3",
    "lss_above_pt",
    "integrate_derivative",
    "epanechnikov",
]

SEG_SUPPORT = "in-support"
SEG_BETWEEN = "between-bulk-linear"
SEG_OUTSIDE = "outside-constant"
SEG_BUMP = "epanechnikov-bump"


@dataclass(frozen=True)
class SpikedModel:
    """Null bulk H with spike distributions under null (G0) and alternative (G1)."""

    H: AtomicMeasure
    G0: AtomicMeasure
    G1: AtomicMeasure
    gamma: float
    h: int = 1
    n: int | None = None

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.h < 1:
            raise ValueError("local parameter h must be at least 1")
        if self.n is not None and self.n < 1:
            raise ValueError("sample size must be positive")

    def resolved_n(self) -> int:
        """Sample size; defaults to (d + h)/gamma when not supplied."""
        if self.n is not None:
            return self.n
        return max(1, round((self.H.n_atoms + self.h) / self.gamma))


@dataclass(frozen=True)
class AlgoConfig:
    """Algorithmic constants; defaults follow the standard parameter table."""

    epsilon: float = 5e-6
    c0: float = 1e-2
    c1: float = 1.5
    ridge_coeff: float = 1e-4
    n_sd: float = 3.0
    s_plus_coeff: float = 0.75
    s_minus_coeff: float = 0.99
    points_per_interval: int = 1000
    solver: str = "diagreg"
    collocation_nodes: int = 150
    alpha: float = 0.05

    @property
    def epsilon1(self) -> float:
        return max(1e-8, self.c0 * self.epsilon)

    def s_plus(self, gamma: float, a_pt: float) -> float:
        return self.s_plus_coeff * (1.0 + math.sqrt(gamma)) * a_pt

    def s_minus(self, a_pt: float) -> float:
        return self.s_minus_coeff * a_pt


@dataclass
class LssFunction:
    """Pointwise test function with piecewise-linear interpolation.

    Constant beyond the outermost grid points on each side; ``segments``
    labels every grid point with the construction it came from.  The
    derivative on the support grid is kept when the function came from
    the integral-equation route.
    """

    grid: np.ndarray
    values: np.ndarray
    segments: list[str]
    normalization: float | None = None
    derivative: np.ndarray | None = None
    derivative_grid: np.ndarray | None = None

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values,
                         left=self.values[0], right=self.values[-1])

    def normalized(self, anchor: bool = True) -> "LssFunction":
        """Copy scaled to max-abs one, optionally anchored to zero at the left."""
        vals = self.values - (self.values[0] if anchor else 0.0)
        scale = float(np.max(np.abs(vals)))
        if scale == 0.0:
            scale = 1.0
        return LssFunction(
            grid=self.grid.copy(),
            values=vals / scale,
            segments=list(self.segments),
            normalization=scale,
            derivative=None if self.derivative is None else self.derivative / scale,
            derivative_grid=self.derivative_grid,
        )

    def to_rows(self):
        for i in range(self.grid.size):
            yield (self.grid[i], self.values[i], self.segments[i])


def epanechnikov(x: np.ndarray) -> np.ndarray:
    """Bump shape max(0, 1 - x^2)."""
    x = np.asarray(x, dtype=float)
    return np.maximum(0.0, 1.0 - x**2)


def integrate_derivative(curve: StieltjesCurve, g: np.ndarray) -> LssFunction:
    """Antiderivative of g on the support, extended linearly between bulks
    and as a constant outside."""
    grid = curve.grid
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(grid))])
    a, b = curve.support.enclosing_interval
    xs = [a]
    ys = [phi[0]]
    labels = [SEG_OUTSIDE]
    for j in range(curve.n_intervals):
        sl = curve.interval_slice(j)
        if j > 0:
            # support edges bounding the gap, values on the connecting line
            prev_hi = curve.support.intervals[j - 1][1]
            this_lo = curve.support.intervals[j][0]
            x0, y0 = xs[-1], ys[-1]
            x1, y1 = grid[sl.start], phi[sl.start]
            for xg in (prev_hi, this_lo):
                yg = y0 + (y1 - y0) * (xg - x0) / (x1 - x0)
                xs.append(xg)
                ys.append(yg)
                labels.append(SEG_BETWEEN)
        xs.extend(grid[sl].tolist())
        ys.extend(phi[sl].tolist())
        labels.extend([SEG_SUPPORT] * (sl.stop - sl.start))
    xs.append(b)
    ys.append(ys[-1])
    labels.append(SEG_OUTSIDE)
    return LssFunction(
        grid=np.array(xs),
        values=np.array(ys),
        segments=labels,
        derivative=np.asarray(g, dtype=float).copy(),
        derivative_grid=grid.copy(),
    )


def _solve_derivative(curve: StieltjesCurve, K: KernelMatrix, delta: SignedMeasureCdf,
                      config: AlgoConfig) -> SolvedDerivative:
    if config.solver == "diagreg":
        return solve_diagreg(K, delta)
    if config.solver == "collocation":
        return solve_collocation(curve, delta, coarse_grid_size=config.collocation_nodes,
                                 epsilon1=config.epsilon1, c1=config.c1)
    raise ValueError(f"unknown solver '{config.solver}'")


def _report_from_g(K: KernelMatrix, g: np.ndarray, delta: SignedMeasureCdf, h: int,
                   alpha: float, regime: str = REGIME_SUBCRITICAL) -> EfficacyReport:
    mu = -h * K.inner(g, delta.cdf)
    sigma2 = K.quadratic_form(g)
    return efficacy_report(mu, sigma2, alpha, regime=regime)


def _prepare(model: SpikedModel, config: AlgoConfig,
             curve: StieltjesCurve | None) -> StieltjesCurve:
    if curve is None:
        curve = stieltjes_grid(model.H, model.gamma,
                               points_per_interval=config.points_per_interval,
                               epsilon=config.epsilon)
    return curve


def lss_above_pt(model: SpikedModel, classification: SpikeClassification,
                 config: AlgoConfig, curve: StieltjesCurve) -> LssFunction:
    """Bump statistic for spikes whose sample location escapes the bulk.

    Each escaped spike gets an Epanechnikov bump of half-width
    n_sd * n^-1/2 * sd centered at its sample location; spikes beyond the
    outermost bulk edge continue as the constant one away from the bulk.
    """
    sup = classification.supercritical
    if not sup:
        raise ValueError("no supercritical spike; below-transition route applies")
    n = model.resolved_n()
    support = curve.support
    s_min = support.intervals[0][0]
    s_max = support.intervals[-1][1]
    a, b = support.enclosing_interval

    bump_specs = []
    for rec in sup:
        w = config.n_sd * rec.asy_sd / math.sqrt(n)
        bump_specs.append((rec.psi, w, rec.psi > s_max, rec.psi < s_min))

    xs = list(curve.grid)
    for psi, w, _, _ in bump_specs:
        xs.extend(np.linspace(psi - w, psi + w, 201).tolist())
    lo = min(a, min(psi - 2 * w for psi, w, _, _ in bump_specs))
    hi = max(b, max(psi + 2 * w for psi, w, _, _ in bump_specs))
    xs.extend([lo, hi])
    grid = np.unique(np.array(xs))

    values = np.zeros_like(grid)
    bump_mask = np.zeros(grid.size, dtype=bool)
    for psi, w, above, below in bump_specs:
        contribution = epanechnikov((grid - psi) / w)
        if above:  # constant one pointing away from the bulk
            contribution[grid >= psi] = 1.0
        if below:
            contribution[grid <= psi] = 1.0
        values = np.maximum(values, contribution)
        bump_mask |= contribution > 0
    labels = []
    for i, x in enumerate(grid):
        if bump_mask[i]:
            labels.append(SEG_BUMP)
        elif support.contains(x):
            labels.append(SEG_SUPPORT)
        else:
            labels.append(SEG_OUTSIDE)
    return LssFunction(grid=grid, values=values, segments=labels)


def optimal_lss(model: SpikedModel, config: AlgoConfig | None = None,
                curve: StieltjesCurve | None = None) -> tuple[LssFunction, EfficacyReport]:
    """Best LSS for the model, with its predicted mean shift, sd and power.

    Below the transition the derivative solves the regularized first-kind
    system and is integrated; above it the bump construction applies, the
    regime is flagged and the asymptotic power is one.  A single slightly
    supercritical spike (h = 1, below s_plus) is replaced by the
    subcritical surrogate s_minus to avoid the finite-sample power drop
    right above the threshold.
    """
    config = config or AlgoConfig()
    curve = _prepare(model, config, curve)
    cls0 = classify_spikes(model.H, model.gamma, model.G0, curve.support)
    if cls0.any_supercritical:
        raise ValueError("null spike distribution G0 must be fully subcritical")
    cls1 = classify_spikes(model.H, model.gamma, model.G1, curve.support)

    if cls1.any_supercritical:
        a_pt = curve.support.upper_pt_threshold
        if model.h == 1 and model.G1.n_atoms == 1:
            # surrogate rule for a single spike just past the uppermost
            # threshold, where the n^-1/2 bump width badly overstates the
            # actual fluctuation of the escaping eigenvalue
            rec = cls1.supercritical[0]
            top_edge = curve.support.intervals[-1][1]
            s1 = float(model.G1.atoms[0])
            if rec.psi > top_edge and s1 < config.s_plus(model.gamma, a_pt):
                surrogate = AtomicMeasure.point_mass(config.s_minus(a_pt))
                sub_model = replace(model, G1=surrogate)
                phi, _ = _below_pt(sub_model, config, curve)
                report = efficacy_report(math.inf, 0.0, config.alpha,
                                         regime=REGIME_SUPERCRITICAL)
                return phi, report
        phi = lss_above_pt(model, cls1, config, curve)
        report = efficacy_report(math.inf, 0.0, config.alpha, regime=REGIME_SUPERCRITICAL)
        return phi, report
    return _below_pt(model, config, curve)


def _below_pt(model: SpikedModel, config: AlgoConfig,
              curve: StieltjesCurve) -> tuple[LssFunction, EfficacyReport]:
    delta = delta_diff(model.H, model.G0, model.G1, model.gamma, curve)
    K = assemble_diagreg(curve, c1=config.c1, ridge_coeff=config.ridge_coeff)
    solved = _solve_derivative(curve, K, delta, config)
    phi = integrate_derivative(curve, solved.values)
    report = _report_from_g(K, solved.values, delta, model.h, config.alpha)
    return phi, report


def optimal_ls3(model: SpikedModel, config: AlgoConfig | None = None,
                curve: StieltjesCurve | None = None) -> tuple[LssFunction, EfficacyReport]:
    """Scale-invariant variant: the derivative is constrained orthogonal to
    D(x) = x * density(x), removing sensitivity to an unknown overall scale.

    Works at the unit-mean normalization; models with a different
    population mean are rescaled internally and the returned function is
    meant to be applied to standardized eigenvalues.
    """
    config = config or AlgoConfig()
    m1 = model.H.moment(1)
    if abs(m1 - 1.0) > 1e-12:
        scale = 1.0 / m1
        model = SpikedModel(
            H=AtomicMeasure(model.H.atoms * scale, model.H.weights),
            G0=AtomicMeasure(model.G0.atoms * scale, model.G0.weights),
            G1=AtomicMeasure(model.G1.atoms * scale, model.G1.weights),
            gamma=model.gamma,
            h=model.h,
            n=model.n,
        )
        curve = None
    curve = _prepare(model, config, curve)
    cls1 = classify_spikes(model.H, model.gamma, model.G1, curve.support)
    if cls1.any_supercritical:
        phi = lss_above_pt(model, cls1, config, curve)
        report = efficacy_report(math.inf, 0.0, config.alpha, regime=REGIME_SUPERCRITICAL)
        return phi, report

    delta = delta_diff(model.H, model.G0, model.G1, model.gamma, curve)
    K = assemble_diagreg(curve, c1=config.c1, ridge_coeff=config.ridge_coeff)
    sq = np.sqrt(K.weights)
    d_vec = sq * curve.grid * curve.density
    d_norm2 = float(d_vec @ d_vec)
    if d_norm2 <= 0.0:
        raise AssertionError("identity direction has zero norm; degenerate bulk")

    def project(u: np.ndarray) -> np.ndarray:
        return u - d_vec * (d_vec @ u) / d_norm2

    A = K.entries - np.outer(d_vec, d_vec @ K.entries) / d_norm2
    A = A - (A @ np.outer(d_vec, d_vec)) / d_norm2
    A = A + K.ridge * np.eye(K.size)
    rhs = -project(sq * delta.cdf)
    u = np.linalg.solve(A, rhs)
    u = project(u)
    g = u / sq
    phi = integrate_derivative(curve, g)
    report = _report_from_g(K, g, delta, model.h, config.alpha)
    return phi, report
