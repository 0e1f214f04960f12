"""
Cluster extraction from low-lying spectra, lattice-point counts and density moments.

The lowest cluster of □_k is separated from the rest of the spectrum by a gap of order k; its size is
the Riemann-Roch number k^n·√det Ω/(2π)^n and its empirical distribution approaches the law of q.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from geometry import AlmostKahlerStructure, q_grid_average
from quantization import SpectrumResult

logger = logging.getLogger(__name__)

MIN_GAP_FRACTION = 0.5
MOMENT_ORDERS = (1, 2, 3, 4)
DENSITY_GRID = 32


def _bump_low(t):
    return np.exp(-(t + 1.0) ** 2)


def _bump_high(t):
    return np.exp(-0.5 * (t - 1.0) ** 2)


DEFAULT_TEST_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    **{f"t^{p}": (lambda t, p=p: t ** p) for p in MOMENT_ORDERS},
    "bump_low": _bump_low,
    "bump_high": _bump_high,
}


@dataclass
class ClusterReport:
    """Lowest cluster of one spectrum and the gap that closes it."""
    k: int
    n: int
    eigenvalues: np.ndarray
    count: int
    expected: int
    gap_lower: Optional[float]
    gap: float
    mean: float
    variance: float
    moments: Dict[int, float] = field(default_factory=dict)
    second_cluster_center: Optional[float] = None
    flagged: bool = False
    flag_reason: Optional[str] = None

    @property
    def relative_gap(self) -> float:
        return self.gap / self.k

    @property
    def count_matches(self) -> bool:
        return self.count == self.expected

    def rows(self) -> List[list]:
        """(k, n_k, expected, gap_lower, gap, mean, variance, m1..m4, second_center, flagged)."""
        return [[self.k, self.count, self.expected,
                 self.gap_lower if self.gap_lower is not None else float('nan'),
                 self.gap, self.mean, self.variance,
                 *[self.moments.get(p, float('nan')) for p in MOMENT_ORDERS],
                 self.second_cluster_center if self.second_cluster_center is not None else float('nan'),
                 int(self.flagged)]]

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "n_k": self.count,
            "expected": self.expected,
            "gap_lower": self.gap_lower,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "mean": self.mean,
            "variance": self.variance,
            "moments": {str(p): v for p, v in self.moments.items()},
            "second_cluster_center": self.second_cluster_center,
            "flagged": self.flagged,
            "flag_reason": self.flag_reason,
        }


def expected_count(k: int, s: AlmostKahlerStructure) -> int:
    """k^n·√det Ω/(2π)^n, the product of the Chern integers of L^k on the coordinate planes."""
    return int(round(k ** s.n * s.volume() / (2 * math.pi) ** s.n))


def landau_levels(k: int, n: int, count: int, scale: int = 1) -> np.ndarray:
    """
    The `count` lowest eigenvalues of □_k for Ω = 2π·scale·std and J = J0: level 2km with
    multiplicity (k·scale)^n·C(m + n - 1, n - 1).
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    values: List[float] = []
    level = 0
    while len(values) < count:
        values.extend([2.0 * k * level] * ((k * scale) ** n * math.comb(level + n - 1, n - 1)))
        level += 1
    return np.array(values[:count])


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log|y| against log x."""
    xs, ys = np.asarray(xs, dtype=float), np.abs(np.asarray(ys, dtype=float))
    if len(xs) < 2 or len(xs) != len(ys):
        raise ValueError("need at least two matching samples for a slope")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log slope needs positive abscissae and non-zero ordinates")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def _values(spectrum: Union[SpectrumResult, Sequence[float]]) -> np.ndarray:
    if isinstance(spectrum, SpectrumResult):
        return np.sort(np.asarray(spectrum.eigenvalues, dtype=float))
    return np.sort(np.asarray(spectrum, dtype=float))


def extract_cluster(spectrum: Union[SpectrumResult, Sequence[float]], k: int,
                    s: AlmostKahlerStructure) -> ClusterReport:
    """
    Split off the eigenvalues below the largest relative gap (λ_{i+1} - λ_i)/k whose lower end lies
    in (-k/2, 3k/2).

    A relative gap below 1/2, or a spectrum that stops before any gap, flags the report.
    """
    values = _values(spectrum)
    expected = expected_count(k, s)
    candidates = [i for i in range(len(values) - 1) if -0.5 * k < values[i] < 1.5 * k]
    flagged, reason = False, None
    if candidates:
        relative = {i: (values[i + 1] - values[i]) / k for i in candidates}
        best = max(candidates, key=relative.get)
        gap = float(values[best + 1] - values[best])
        cluster, gap_lower = values[:best + 1], float(values[best + 1])
        if relative[best] < MIN_GAP_FRACTION:
            flagged, reason = True, (f"largest relative gap {relative[best]:.4f} (gap {gap:.4f}) is below "
                                     f"{MIN_GAP_FRACTION}, i.e. below k/2 = {0.5 * k}")
    else:
        gap, gap_lower = 0.0, None
        cluster = values[values < 1.5 * k]
        flagged, reason = True, "spectrum ends before any gap in (-k/2, 3k/2)"

    second = None
    if gap_lower is not None:
        upper = values[(values >= gap_lower) & (values < gap_lower + 0.5 * k)]
        if len(upper) and values[-1] >= gap_lower + 0.5 * k:
            second = float(np.mean(upper))

    report = ClusterReport(
        k=k, n=s.n, eigenvalues=cluster, count=len(cluster), expected=expected,
        gap_lower=gap_lower, gap=gap,
        mean=float(np.mean(cluster)) if len(cluster) else float('nan'),
        variance=float(np.var(cluster)) if len(cluster) else float('nan'),
        moments={p: float(np.mean(cluster ** p)) if len(cluster) else float('nan') for p in MOMENT_ORDERS},
        second_cluster_center=second, flagged=flagged, flag_reason=reason,
    )
    if flagged:
        logger.warning(f"Cluster for k={k} flagged: {reason}")
    else:
        logger.info(f"Cluster for k={k}: n_k={report.count} (expected {expected}), gap {gap:.4f}")
    return report


def count_check(reports: Sequence[ClusterReport]) -> Dict:
    """Exact cluster counts against k^n·∏ Chern integers, plus the log-log growth slope."""
    if len(reports) < 3:
        raise ValueError(f"count check needs at least 3 values of k, got {len(reports)}")
    ks = [r.k for r in reports]
    counts = [r.count for r in reports]
    mismatches = [r.k for r in reports if not r.count_matches or r.flagged]
    slope = loglog_slope(ks, counts) if all(c > 0 for c in counts) else float('nan')
    summary = {
        "k": ks,
        "n_k": counts,
        "expected": [r.expected for r in reports],
        "slope": slope,
        "mismatches": mismatches,
        "passed": not mismatches,
    }
    if mismatches:
        logger.warning(f"Cluster counts differ from the Riemann-Roch number at k={mismatches}")
    return summary


@dataclass
class DensityComparison:
    k: int
    cluster_averages: Dict[str, float]
    reference_averages: Dict[str, float]
    deltas: Dict[str, float]
    q_spread: float

    def rows(self) -> List[list]:
        """(k, function, cluster average, q average, delta) per test function."""
        return [[self.k, name, self.cluster_averages[name], self.reference_averages[name], self.deltas[name]]
                for name in self.deltas]


def density_compare(report: ClusterReport, s: AlmostKahlerStructure,
                    fset: Optional[Dict[str, Callable[[np.ndarray], np.ndarray]]] = None,
                    grid_n: int = DENSITY_GRID) -> DensityComparison:
    """|mean of f over the cluster - uniform average of f∘q over the torus| for each test function."""
    if report.flagged:
        raise ValueError(f"cluster for k={report.k} is flagged; density comparison needs an accepted cluster")
    fset = fset or DEFAULT_TEST_FUNCTIONS
    _, q_values = q_grid_average(s, grid_n)
    cluster, reference, deltas = {}, {}, {}
    for name, f in fset.items():
        cluster[name] = float(np.mean(f(report.eigenvalues)))
        reference[name] = float(np.mean(f(q_values)))
        deltas[name] = abs(cluster[name] - reference[name])
    logger.debug(f"Density deltas at k={report.k}: {deltas}")
    return DensityComparison(k=report.k, cluster_averages=cluster, reference_averages=reference,
                             deltas=deltas, q_spread=float(np.max(q_values) - np.min(q_values)))
