"""
Experiment runner.

Executes the tasks of an ExperimentConfig in dependency order (geometry checks, spectra, analysis),
fans independent k values and quasimode centres out to a worker pool, isolates failures per task and
assembles a RunReport from the artifacts written to the output directory.
"""

import itertools
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from analysis import (
    QuasimodeError, boundary_mass, coherent_state_for, count_check, density_compare, expected_count,
    extract_cluster, localization_check, loglog_slope, mass_within_radius, rayleigh_quotient, residual_norm,
    snap_to_grid
)
from experiment_spec import ExperimentConfig, Task
from geometry import (
    build_structure, check_trace_identities, curvature_scalars, finite_difference_nabla_J, nabla_J,
    probe_grid, probe_table, q_density, q_grid_average, sup_nabla_J
)
from kkgeom import KKMetric, fermi_expansion_check, fiber_deviation, geodesic_integrate, kk_christoffel_check
from oscillator import kappa_of_k, verify_eigenrelations, verify_solvability
from quantization import SolverOptions, build_operator, lowest_eigenpairs
from .reports import (
    RunReport, TaskResult, TaskStatus, config_hash, write_csv, write_json, write_plot_script
)

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-10
LEMMA_TOL = 1e-7
JET_TOL = 1e-8
CHRISTOFFEL_TOL = 1e-6
FIBER_TOL = 1e-9
FERMI_A2 = -0.25
FERMI_TOL = 1e-4
CUBIC_NOISE_FLOOR = 1e-6
KAHLER_CLUSTER_WIDTH = 0.05
KAHLER_GAP = 1.5
SECOND_CLUSTER_TOL = 0.05
REFINEMENT_FACTOR = 3.0
DENSITY_SPREAD_SHARE = 0.25
ORDER_MARGIN = 0.2
MIN_RATE = 0.4
SLOPE_SLACK = 0.15
RATE_MIN_Q = 0.2
MIN_MASS = 0.99
BOUNDARY_MASS_TOL = 0.02


def _status(criteria: Dict[str, bool], flags: Optional[Dict[str, bool]] = None) -> Tuple[TaskStatus, str]:
    failed = [name for name, ok in criteria.items() if not ok]
    if failed:
        return TaskStatus.FAIL, f"failed criteria: {', '.join(failed)}"
    flagged = [name for name, ok in (flags or {}).items() if not ok]
    if flagged:
        return TaskStatus.FLAGGED, f"flagged: {', '.join(flagged)}"
    return TaskStatus.PASS, "all criteria met"


class ExperimentRunner:
    """Runs one validated experiment into an output directory."""

    def __init__(self, config: ExperimentConfig, output_dir: Path, workers: int = 1, version: str = "0"):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.config = config
        self.output_dir = Path(output_dir)
        self.workers = workers
        self.version = version
        self.structure = build_structure(config.structure.family_spec())
        self.operators = {}
        self.spectra = {}
        self.clusters = {}
        self.results: Dict[Task, TaskResult] = {}
        self._artifacts: List[str] = []
        self._lock = threading.Lock()

    def _write_csv(self, name: str, header, rows):
        write_csv(self.output_dir / name, header, rows)
        with self._lock:
            self._artifacts.append(name)

    def _write_json(self, name: str, data):
        write_json(self.output_dir / name, data)
        with self._lock:
            self._artifacts.append(name)

    def _map(self, fn: Callable, items: List) -> List:
        if self.workers == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    def run(self) -> RunReport:
        started = time.monotonic()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        handlers = {
            Task.GEOMETRY_CHECK: self._geometry_check,
            Task.KKGEOM_CHECK: self._kkgeom_check,
            Task.OSCILLATOR_CHECK: self._oscillator_check,
            Task.SPECTRUM: self._spectrum,
            Task.DENSITY: self._density,
            Task.QUASIMODE: self._quasimode,
        }
        logger.info(f"[{self.config.name}] Running tasks {[t.value for t in self.config.ordered_tasks()]} "
                    f"into {self.output_dir}")
        for task in self.config.ordered_tasks():
            self.results[task] = self._run_task(task, handlers[task])

        tables = [a for a in self._artifacts if a.endswith(".csv")]
        if write_plot_script(self.output_dir / "plots.gp", tables) is not None:
            self._artifacts.append("plots.gp")
        report = RunReport(
            name=self.config.name,
            config_hash=config_hash(self.config),
            version=self.version,
            seed=self.config.solver.seed,
            wall_time=time.monotonic() - started,
            tasks=list(self.results.values()),
            artifacts=sorted(set(self._artifacts)) + ["report.json"],
        )
        write_json(self.output_dir / "report.json", report.model_dump(mode="json"))
        logger.info(f"[{self.config.name}] Finished in {report.wall_time:.1f}s with exit code {report.exit_code}")
        return report

    def _run_task(self, task: Task, handler: Callable[[], TaskResult]) -> TaskResult:
        if task in (Task.DENSITY, Task.QUASIMODE):
            spectrum = self.results.get(Task.SPECTRUM)
            if spectrum is None or spectrum.status == TaskStatus.FAIL:
                return TaskResult(name=task.value, status=TaskStatus.FAIL,
                                  message="prerequisite task 'spectrum' did not complete")
        logger.info(f"[{task.value}] Starting")
        started = time.monotonic()
        try:
            result = handler()
        except Exception as e:
            logger.error(f"[{task.value}] Failed: {e}")
            result = TaskResult(name=task.value, status=TaskStatus.FAIL, message=f"{type(e).__name__}: {e}")
        result.seconds = time.monotonic() - started
        log = logger.info if result.status == TaskStatus.PASS else logger.warning
        log(f"[{task.value}] {result.status.value}: {result.message}")
        return result

    def _geometry_check(self) -> TaskResult:
        s = self.structure
        cfg = self.config.geometry
        rng = np.random.default_rng(cfg.seed)
        points = rng.random((cfg.random_points, s.dim))
        trace_res, v_res = check_trace_identities(s, points, trials=100, seed=cfg.seed)
        lemma_points = rng.random((cfg.lemma_points, s.dim))
        _, _, lemma = curvature_scalars(s, lemma_points)
        jet_res = max(float(np.max(np.abs(finite_difference_nabla_J(s, p) - nabla_J(s, p)))) for p in lemma_points)

        probes = probe_grid(s.dim, cfg.probe_per_axis)
        table = probe_table(s, probes, seed=cfg.seed)
        columns = list(table)
        self._write_csv("geometry_probe.csv", [f"x{i + 1}" for i in range(s.dim)] + columns,
                        [[*p, *(table[c][i] for c in columns)] for i, p in enumerate(probes)])

        q_mean, q_values = q_grid_average(s, cfg.probe_per_axis * 4)
        criteria = {
            "trace_identity": trace_res <= TRACE_TOL,
            "contraction_identity": v_res <= TRACE_TOL,
            "curvature_lemma": float(np.max(lemma)) <= LEMMA_TOL,
            "jet_cross_validation": jet_res <= JET_TOL,
        }
        status, message = _status(criteria)
        return TaskResult(name=Task.GEOMETRY_CHECK.value, status=status, message=message, criteria=criteria,
                          details={"trace_residual": trace_res, "v_residual": v_res,
                                   "lemma_residual": float(np.max(lemma)), "jet_residual": jet_res,
                                   "sup_nabla_J_sq": sup_nabla_J(s, 8), "q_mean": q_mean,
                                   "q_min": float(np.min(q_values)), "q_max": float(np.max(q_values))})

    def _kkgeom_check(self) -> TaskResult:
        s = self.structure
        cfg = self.config.kkgeom
        x0 = np.array(cfg.x0 if cfg.x0 is not None else [0.2] * s.dim)
        table = kk_christoffel_check(s, x0)
        m = KKMetric(s, x0)
        deviation = fiber_deviation(m, x0)
        v0 = np.zeros(m.dim)
        v0[0] = 1.0
        path = geodesic_integrate(m, np.concatenate([[0.0], x0]), v0, 1.0, cfg.steps)
        self._write_csv("fiber_path.csv", ["t", "theta"] + [f"x{i + 1}" for i in range(s.dim)] + ["energy"],
                        path.rows())

        fit = fermi_expansion_check(s, x0, cfg.radii, steps=cfg.steps, workers=self.workers)
        halved = fermi_expansion_check(s, x0, [r / 2 for r in cfg.radii], steps=cfg.steps, workers=self.workers)
        improved = abs(halved.a3_coeff) <= max(abs(fit.a3_coeff) / 4, CUBIC_NOISE_FLOOR)
        criteria = {
            "christoffel_table": table["max_residual"] <= CHRISTOFFEL_TOL,
            "fiber_geodesic": deviation <= FIBER_TOL,
            "fermi_quadratic": abs(fit.a2_coeff - FERMI_A2) <= FERMI_TOL,
            "fermi_cubic": abs(fit.a3_coeff) <= FERMI_TOL,
            "fermi_cubic_refinement": improved,
        }
        flags = {"fermi_fit_conditioning": not (fit.flagged or halved.flagged)}
        report = {"christoffel": table, "fiber_deviation": deviation, "fiber_drift": path.drift,
                  "fermi": fit.to_dict(), "fermi_halved": halved.to_dict(), "criteria": criteria}
        self._write_json("kkgeom_report.json", report)
        status, message = _status(criteria, flags)
        return TaskResult(name=Task.KKGEOM_CHECK.value, status=status, message=message, criteria=criteria,
                          details={"christoffel_max_residual": table["max_residual"],
                                   "fiber_deviation": deviation, "a2_coeff": fit.a2_coeff,
                                   "a3_coeff": fit.a3_coeff, "a3_coeff_halved": halved.a3_coeff})

    def _oscillator_check(self) -> TaskResult:
        cfg = self.config.oscillator
        eigen = self._map(verify_eigenrelations, list(cfg.dims))
        solvability = self._map(lambda d: verify_solvability(d, cfg.trials, cfg.seed), list(cfg.dims))
        kappas = {str(k): [str(v) for v in kappa_of_k(k, self.structure.n)] for k in self.config.k_list}
        self._write_json("oscillator_report.json",
                         {"eigenrelations": eigen, "solvability": solvability, "kappa": kappas})
        criteria = {
            "eigenrelations": all(not r["failures"] for r in eigen),
            "solvability_shift": all(r["mismatches"] == 0 for r in solvability),
        }
        status, message = _status(criteria)
        return TaskResult(name=Task.OSCILLATOR_CHECK.value, status=status, message=message, criteria=criteria,
                          details={"failures": sum(len(r["failures"]) for r in eigen),
                                   "mismatches": sum(r["mismatches"] for r in solvability)})

    def _eigen_count(self, k: int) -> int:
        s = self.structure
        expected = expected_count(k, s)
        count = expected * (s.n + 1) if self.config.solver.second_cluster else expected
        return min(count + self.config.solver.extra_eigenvalues, 2 * k ** s.n + 20)

    def _spectrum_for(self, k: int, N: Optional[int] = None, count: Optional[int] = None):
        cfg = self.config.solver
        N = N or self.config.grid_size(k)
        op = build_operator(self.structure, k, N)
        options = SolverOptions(tol=cfg.tol, max_iterations=cfg.max_iterations, block_size=cfg.block_size,
                                krylov_blocks=cfg.krylov_blocks, seed=cfg.seed, method=cfg.method.value)
        result = lowest_eigenpairs(op, count=count or self._eigen_count(k), options=options)
        result.eigenvectors = None
        cluster = extract_cluster(result, k, self.structure)
        logger.info(f"[k={k}] N={N}: {len(result.eigenvalues)} eigenvalues, n_k={cluster.count}, "
                    f"gap {cluster.gap:.4f}")
        return op, result, cluster

    def _spectrum(self) -> TaskResult:
        s = self.structure
        errors = {}

        def task(k):
            try:
                return k, self._spectrum_for(k)
            except Exception as e:
                logger.error(f"[k={k}] Spectrum failed: {e}")
                errors[k] = f"{type(e).__name__}: {e}"
                return k, None

        for k, out in self._map(task, list(self.config.k_list)):
            if out is not None:
                self.operators[k], self.spectra[k], self.clusters[k] = out

        ks = sorted(self.spectra)
        self._write_csv("spectrum.csv", ["k", "N", "index", "lambda", "residual"],
                        [row for k in ks for row in self.spectra[k].rows()])
        operators = {}
        for k in ks:
            op, res = self.operators[k], self.spectra[k]
            operators[str(k)] = {**op.metadata(), "hermiticity_defect": op.hermiticity_defect(),
                                 "flux_residual": op.flux_residual(), "iterations": res.iterations,
                                 "matvecs": res.matvecs, "converged": res.converged,
                                 "wall_time": res.wall_time, "flag_reason": res.flag_reason}
        self._write_json("operators.json", operators)
        self._write_csv("clusters.csv",
                        ["k", "n_k", "expected", "gap_lower", "gap", "mean", "variance",
                         "m1", "m2", "m3", "m4", "second_center", "flagged"],
                        [row for k in ks for row in self.clusters[k].rows()])

        criteria = {"all_k_computed": not errors,
                    "cluster_counts": all(self.clusters[k].count_matches for k in ks)}
        details = {"errors": errors, "clusters": {str(k): self.clusters[k].to_dict() for k in ks}}
        if len(ks) >= 3:
            summary = count_check([self.clusters[k] for k in ks])
            details["count_check"] = summary
            criteria["cluster_counts"] = summary["passed"]
        if s.is_constant:
            criteria["landau_cluster"] = all(
                np.all(np.abs(self.clusters[k].eigenvalues) <= KAHLER_CLUSTER_WIDTH * k)
                and self.clusters[k].gap_lower is not None
                and self.clusters[k].gap_lower > KAHLER_GAP * k for k in ks)
            centers = {k: self.clusters[k].second_cluster_center for k in ks}
            if self.config.solver.second_cluster and any(c is not None for c in centers.values()):
                criteria["second_cluster_center"] = all(abs(c - 2 * k) <= SECOND_CLUSTER_TOL * 2 * k
                                                        for k, c in centers.items() if c is not None)
            if self.config.grid.refinement_check and ks:
                details["refinement"] = self._refinement(ks[-1])
                criteria["grid_refinement"] = details["refinement"]["passed"]
        flags = {"solver_converged": all(self.spectra[k].converged for k in ks),
                 "gap_found": not any(self.clusters[k].flagged for k in ks)}
        status, message = _status(criteria, flags)
        return TaskResult(name=Task.SPECTRUM.value, status=status, message=message, criteria=criteria,
                          details=details)

    def _refinement(self, k: int) -> Dict:
        """Largest |λ| of the lowest cluster at N and 2N; the deviation must shrink by REFINEMENT_FACTOR."""
        N = self.operators[k].N
        count = self.clusters[k].count
        _, fine, _ = self._spectrum_for(k, 2 * N, count + 4)
        coarse_dev = float(np.max(np.abs(self.clusters[k].eigenvalues)))
        fine_dev = float(np.max(np.abs(fine.eigenvalues[:count])))
        logger.info(f"[k={k}] Cluster deviation {coarse_dev:.3e} at N={N}, {fine_dev:.3e} at N={2 * N}")
        return {"k": k, "N": N, "deviation": coarse_dev, "deviation_refined": fine_dev,
                "passed": fine_dev * REFINEMENT_FACTOR <= coarse_dev or fine_dev <= 1e-10}

    def _density(self) -> TaskResult:
        s = self.structure
        accepted = [k for k in sorted(self.clusters) if not self.clusters[k].flagged]
        if not accepted:
            return TaskResult(name=Task.DENSITY.value, status=TaskStatus.FLAGGED,
                              message="no accepted cluster to compare")
        comparisons = self._map(lambda k: density_compare(self.clusters[k], s, grid_n=self.config.density.grid_n),
                                accepted)
        self._write_csv("density.csv", ["k", "function", "cluster_average", "q_average", "delta"],
                        [row for c in comparisons for row in c.rows()])
        linear = {c.k: c.deltas["t^1"] for c in comparisons}
        criteria = {}
        if s.is_constant:
            criteria["kahler_deltas"] = all(linear[k] <= KAHLER_CLUSTER_WIDTH * k for k in accepted)
        elif len(accepted) >= 2:
            spread = comparisons[-1].q_spread
            criteria["delta_trend"] = linear[accepted[-1]] < linear[accepted[0]]
            criteria["delta_spread_share"] = linear[accepted[-1]] <= DENSITY_SPREAD_SHARE * spread
        status, message = _status(criteria)
        details = {"deltas": {str(c.k): c.deltas for c in comparisons}, "q_spread": comparisons[-1].q_spread}
        if "delta_trend" in criteria:
            top = comparisons[-1]
            approaching = criteria["delta_trend"] and criteria["delta_spread_share"]
            details["verdict"] = (f"cluster averages {'approach' if approaching else 'stay away from'} the "
                                  f"average of q: cluster mean {top.cluster_averages['t^1']:.4f}, q average "
                                  f"{top.reference_averages['t^1']:.4f} at k={top.k}")
            message = f"{message}; {details['verdict']}"
        return TaskResult(name=Task.DENSITY.value, status=status, message=message, criteria=criteria,
                          details=details)

    def _quasimode_sample(self, item):
        op, index, x0 = item
        k = op.k
        point = snap_to_grid(x0, op.N)
        if not np.allclose(point, x0):
            logger.info(f"[k={k}] Moved quasimode centre {list(x0)} to grid point {point.tolist()}")
        try:
            psi = coherent_state_for(op, point)
        except QuasimodeError as e:
            return {"k": k, "index": index, "error": str(e)}
        orders = self.config.quasimode.localization_orders
        return {
            "k": k, "index": index, "x0": point, "kappa": psi.kappa,
            "q_x0": float(q_density(self.structure, point)),
            "r_k": rayleigh_quotient(op, psi),
            "residual": residual_norm(op, psi, point, self.structure),
            "mass": mass_within_radius(psi, self.structure),
            "boundary": boundary_mass(psi),
            "localization": {m: localization_check(psi, m, self.structure) for m in orders},
        }

    def _quasimode(self) -> TaskResult:
        N = self.config.quasimode.N
        samples = []
        for k in sorted(self.operators):
            op = self.operators[k] if N is None else build_operator(self.structure, k, N)
            items = [(op, i, np.asarray(x0, dtype=float)) for i, x0 in enumerate(self.config.x0_list)]
            samples.extend(self._map(self._quasimode_sample, items))
        refused = [s for s in samples if "error" in s]
        done = [s for s in samples if "error" not in s]

        self._write_csv("rayleigh.csv", ["k", "point", "q_x0", "r_k", "residual", "mass"]
                        + [f"x{i + 1}" for i in range(self.structure.dim)],
                        [[s["k"], s["index"], s["q_x0"], s["r_k"], s["residual"], s["mass"], *s["x0"]]
                         for s in done])
        self._write_csv("localization.csv", ["k", "point", "m", "kappa", "value"],
                        [[s["k"], s["index"], m, s["kappa"], v] for s in done
                         for m, v in s["localization"].items()])

        criteria, details = quasimode_criteria(done, self.config.quasimode.localization_orders)
        criteria = {"resolution": not refused, **criteria}
        status, message = _status(criteria)
        refusals = [f"k={s['k']} point {s['index']}: {s['error']}" for s in refused]
        return TaskResult(name=Task.QUASIMODE.value, status=status, message=message, criteria=criteria,
                          details={"N": N, "refused": refusals, **details,
                                   "rayleigh": [{"k": s["k"], "x0": s["x0"].tolist(), "r_k": s["r_k"],
                                                 "q_x0": s["q_x0"]} for s in done]})


def quasimode_criteria(samples: List[dict], orders: Sequence[int]) -> Tuple[Dict[str, bool], Dict]:
    """
    Criteria over accepted coherent-state samples: r_k ordered like q(x₀) at the largest k, mass
    concentration, |r_k - q(x₀)| decaying at least like k^-MIN_RATE, and even localization moments
    scaling like κ^{-m/2}. Moment slopes are fitted over the samples whose boundary mass is at most
    BOUNDARY_MASS_TOL; wrapped Gaussians flatten the slope.
    """
    by_point: Dict[int, List[dict]] = {}
    for s in samples:
        by_point.setdefault(s["index"], []).append(s)
    k_top = max((s["k"] for s in samples), default=None)
    top = [s for s in samples if s["k"] == k_top]
    ordered = all(a["r_k"] < b["r_k"] for a, b in itertools.permutations(top, 2)
                  if a["q_x0"] < b["q_x0"] - ORDER_MARGIN)

    rates, slopes, off_slope = {}, {}, []
    for index, rows in sorted(by_point.items()):
        rows = sorted(rows, key=lambda r: r["k"])
        if len(rows) < 2:
            continue
        deviations = [abs(r["r_k"] - r["q_x0"]) for r in rows]
        if abs(rows[0]["q_x0"]) >= RATE_MIN_Q and all(d > 0 for d in deviations):
            rates[index] = -loglog_slope([r["k"] for r in rows], deviations)
        fit = [r for r in rows if r["boundary"] <= BOUNDARY_MASS_TOL]
        for m in orders:
            values = [r["localization"][m] for r in fit]
            if m % 2 == 0 and len(fit) >= 2 and all(v > 0 for v in values):
                key = f"{index}:{m}"
                slopes[key] = loglog_slope([r["kappa"] for r in fit], values)
                if abs(slopes[key] + m / 2) > SLOPE_SLACK:
                    off_slope.append(key)

    slow = [i for i, a in rates.items() if a < MIN_RATE]
    if slow:
        logger.warning(f"Rayleigh quotients approach q(x0) slower than k^-{MIN_RATE} at points {slow}")
    criteria = {"rayleigh_ordering": ordered,
                "mass_concentration": all(s["mass"] >= MIN_MASS for s in samples),
                "rayleigh_rate": not slow,
                "localization_slope": not off_slope}
    return criteria, {"rates": {str(i): a for i, a in rates.items()}, "localization_slopes": slopes}
