"""Classical identity/sphericity tests and their equivalent spectral statistics.

Every entry carries the original eigenvalue statistic together with a
builder for the asymptotically equivalent test function, parameterized by
the limiting-distribution moments m_i so that the equivalence holds for
arbitrary population spectra, not just the white-noise null.  A
delta-method linearization reduces smooth bivariate functionals of two
statistics to a single equivalent one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import AtomicMeasure
from .mp import StieltjesCurve, esd_expectation, forward_moments
from .optimal import SEG_OUTSIDE, SEG_SUPPORT, LssFunction

__all__ = [
    "TestCatalogEntry",
    "catalog",
    "catalog_ids",
    "equivalent_lss",
    "evaluate_statistic",
    "linearize",
    "polynomial_entry",
    "omh_z",
]


def omh_z(t: float, gamma: float) -> float:
    """Sample-spike location z(t) = t * (1 + gamma/(t-1)) for the white-noise bulk."""
    if t == 1.0:
        raise ValueError("z(t) undefined at t = 1")
    return t * (1.0 + gamma / (t - 1.0))


def _require_positive(eigs: np.ndarray, what: str) -> None:
    if np.any(eigs <= 0):
        raise ValueError(f"{what} requires strictly positive eigenvalues")


@dataclass(frozen=True)
class TestCatalogEntry:
    """One classical test: original statistic plus equivalent-LSS builder."""

    test_id: str
    null_kind: str  # "identity" or "sphericity"
    build: Callable[..., Callable[[np.ndarray], np.ndarray]]
    original: Callable[..., float]
    needs: tuple[str, ...] = field(default=())  # required parameter names


def _entry_definitions() -> list[TestCatalogEntry]:
    def lrt_identity_lss(m, gamma, params):
        return lambda x: x - np.log(x) - 1.0

    def lrt_identity_stat(eigs, n, params):
        _require_positive(eigs, "identity LRT")
        return float(np.sum(eigs) - np.sum(np.log(eigs)) - eigs.size)

    def mauchly_lss(m, gamma, params):
        return lambda x: x / m[0] - np.log(x / m[0]) - 1.0

    def mauchly_stat(eigs, n, params):
        _require_positive(eigs, "sphericity LRT")
        p = eigs.size
        return float(p * math.log(np.mean(eigs)) - np.sum(np.log(eigs)))

    def john_identity_lss(m, gamma, params):
        return lambda x: np.asarray(x, dtype=float)

    def john_identity_stat(eigs, n, params):
        return float(np.sum(eigs))

    def john_sphericity_lss(m, gamma, params):
        return lambda x: m[0] * x**2 - 2.0 * m[1] * x

    def john_sphericity_stat(eigs, n, params):
        p = eigs.size
        scaled = p * eigs / np.sum(eigs)
        return float(np.sum((scaled - 1.0) ** 2))

    def nagao_lss(m, gamma, params):
        return lambda x: (x - 1.0) ** 2

    def nagao_stat(eigs, n, params):
        return float(np.sum((eigs - 1.0) ** 2))

    def ledoit_wolf_lss(m, gamma, params):
        return lambda x: x**2 - 2.0 * (1.0 + gamma * m[0]) * x

    def ledoit_wolf_stat(eigs, n, params):
        return float(np.sum((eigs - 1.0) ** 2) - np.sum(eigs) ** 2 / n)

    def fisher_lss(m, gamma, params):
        return lambda x: m[1] * x**4 - 2.0 * m[3] * x**2

    def fisher_stat(eigs, n, params):
        return float(eigs.size * np.sum(eigs**4) / np.sum(eigs**2) ** 2)

    def omh_identity_lss(m, gamma, params):
        z = omh_z(params["t"], gamma)
        def phi(x):
            arg = z - np.asarray(x, dtype=float)
            if np.any(arg <= 0):
                raise ValueError("z(t) - x must stay positive: spike is supercritical "
                                 "for this grid")
            return -np.log(arg)
        return phi

    def omh_identity_stat(eigs, n, params):
        gamma = eigs.size / n
        return float(np.sum(omh_identity_lss(None, gamma, params)(eigs)))

    def omh_sphericity_lss(m, gamma, params):
        t = params["t"]
        z = omh_z(t, gamma)
        def phi(x):
            x = np.asarray(x, dtype=float)
            arg = z - x
            if np.any(arg <= 0):
                raise ValueError("z(t) - x must stay positive: spike is supercritical "
                                 "for this grid")
            return -np.log(arg) - ((t - 1.0) / gamma) * x
        return phi

    def omh_sphericity_stat(eigs, n, params):
        gamma = eigs.size / n
        return float(np.sum(omh_sphericity_lss(None, gamma, params)(eigs)))

    def reg_lrt_lss(m, gamma, params):
        lam = params["lam"]
        return lambda x: x - np.log(x + lam)

    def reg_lrt_stat(eigs, n, params):
        lam = params["lam"]
        if np.any(eigs + lam <= 0):
            raise ValueError("regularized LRT requires eigenvalues + lam > 0")
        return float(np.sum(eigs) - np.sum(np.log(eigs + lam)))

    return [
        TestCatalogEntry("lrt-identity", "identity", lrt_identity_lss, lrt_identity_stat),
        TestCatalogEntry("mauchly", "sphericity", mauchly_lss, mauchly_stat),
        TestCatalogEntry("john-identity", "identity", john_identity_lss, john_identity_stat),
        TestCatalogEntry("john-sphericity", "sphericity", john_sphericity_lss, john_sphericity_stat),
        TestCatalogEntry("nagao", "identity", nagao_lss, nagao_stat),
        TestCatalogEntry("ledoit-wolf", "identity", ledoit_wolf_lss, ledoit_wolf_stat),
        TestCatalogEntry("fisher-2010", "sphericity", fisher_lss, fisher_stat),
        TestCatalogEntry("omh-identity", "identity", omh_identity_lss, omh_identity_stat,
                         needs=("t",)),
        TestCatalogEntry("omh-sphericity", "sphericity", omh_sphericity_lss, omh_sphericity_stat,
                         needs=("t",)),
        TestCatalogEntry("regularized-lrt", "identity", reg_lrt_lss, reg_lrt_stat,
                         needs=("lam",)),
    ]


_CATALOG = {e.test_id: e for e in _entry_definitions()}


def catalog() -> dict[str, TestCatalogEntry]:
    return dict(_CATALOG)


def catalog_ids() -> list[str]:
    return list(_CATALOG)


def polynomial_entry(coefficients) -> TestCatalogEntry:
    """Custom degree-4 polynomial statistic sum_k c_k x^k.

    Covers moment-based tests whose published coefficients must be
    supplied by the user; not part of the named catalog.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.size != 5:
        raise ValueError("expected five coefficients c_0..c_4")

    def build(m, gamma, params):
        return lambda x: np.polyval(c[::-1], np.asarray(x, dtype=float))

    def stat(eigs, n, params):
        return float(np.sum(np.polyval(c[::-1], eigs)))

    return TestCatalogEntry("polynomial", "identity", build, stat)


def _resolve_entry(entry: TestCatalogEntry | str) -> TestCatalogEntry:
    if isinstance(entry, str):
        try:
            return _CATALOG[entry]
        except KeyError:
            raise KeyError(f"unknown test id '{entry}'; known: {catalog_ids()}") from None
    return entry


def equivalent_lss(entry: TestCatalogEntry | str, H: AtomicMeasure, gamma: float,
                   curve: StieltjesCurve, **params) -> LssFunction:
    """Equivalent test function of a catalog entry on the curve's grid.

    Moments m_1..m_4 of the limiting distribution are resolved exactly
    from (H, gamma) so the catalog algebra (e.g. the sphericity LRT
    reducing to the identity LRT at unit mean) holds to round-off.
    """
    entry = _resolve_entry(entry)
    for name in entry.needs:
        if name not in params:
            raise ValueError(f"test '{entry.test_id}' requires parameter '{name}'")
    m = forward_moments(H, gamma, 4)
    phi = entry.build(m, gamma, params)
    a, b = curve.support.enclosing_interval
    grid = np.concatenate([[a], curve.grid, [b]])
    values = np.concatenate([phi(np.array([curve.grid[0]])),
                             phi(curve.grid),
                             phi(np.array([curve.grid[-1]]))])
    segments = [SEG_OUTSIDE] + [SEG_SUPPORT] * curve.grid.size + [SEG_OUTSIDE]
    return LssFunction(grid=grid, values=values, segments=segments)


def evaluate_statistic(entry: TestCatalogEntry | str, eigenvalues, n: int, **params) -> float:
    """Original-form statistic on a set of sample eigenvalues."""
    entry = _resolve_entry(entry)
    for name in entry.needs:
        if name not in params:
            raise ValueError(f"test '{entry.test_id}' requires parameter '{name}'")
    eigs = np.asarray(eigenvalues, dtype=float)
    return entry.original(eigs, n, params)


def linearize(y_gradient: Callable[[float, float], tuple[float, float]],
              phi: Callable[[np.ndarray], np.ndarray],
              psi: Callable[[np.ndarray], np.ndarray],
              curve: StieltjesCurve,
              phi_at_zero: float | None = None,
              psi_at_zero: float | None = None,
              sigma_check: Callable[[np.ndarray], float] | None = None) -> LssFunction:
    """Delta-method reduction of y(T(phi)/p, T(psi)/p) to one test function.

    Returns j = d1*phi + d2*psi with the gradient of y taken at the
    limiting means (F(phi), F(psi)) computed by grid quadrature.  If
    ``sigma_check`` (mapping grid values to an asymptotic variance) is
    supplied, a vanishing variance is rejected, since the equivalence
    needs a nondegenerate limit.
    """
    a1 = esd_expectation(curve, phi, f_at_zero=phi_at_zero)
    a2 = esd_expectation(curve, psi, f_at_zero=psi_at_zero)
    d1, d2 = y_gradient(a1, a2)
    lo, hi = curve.support.enclosing_interval

    def j(x):
        return d1 * phi(np.asarray(x, dtype=float)) + d2 * psi(np.asarray(x, dtype=float))

    grid = np.concatenate([[lo], curve.grid, [hi]])
    values = np.concatenate([j(np.array([curve.grid[0]])), j(curve.grid),
                             j(np.array([curve.grid[-1]]))])
    if sigma_check is not None:
        sigma2 = sigma_check(values[1:-1])
        if sigma2 <= 0:
            raise ValueError("linearized statistic has zero asymptotic variance")
    segments = [SEG_OUTSIDE] + [SEG_SUPPORT] * curve.grid.size + [SEG_OUTSIDE]
    return LssFunction(grid=grid, values=values, segments=segments)
