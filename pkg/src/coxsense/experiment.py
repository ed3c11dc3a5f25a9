"""Experiment orchestration: simulation dumps, per-method estimation,
metric evaluation, and seeded Monte Carlo sweeps.

All outputs are comma-delimited text with header rows.  Estimation at epoch
t uses every scan collected up to and including t (the sensor-state list
grows scan by scan), and the sampler warm-starts from the previous epoch's
estimate.

Seed splitting: the random stream of stage ``tag`` in replication ``r`` and
epoch ``t`` is ``numpy.random.SeedSequence(master_seed, spawn_key=(tag, r,
t))`` with tags 0 = scene, 1 = measurements, 2 = chain, so any cell of a
sweep is reproducible in isolation.
"""

from __future__ import annotations

import csv
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import dbscan_grid_search, oracle_estimate
from .config import ScenarioConfig
from .mcmc import run_chain
from .metrics import ospa
from .model import Extent, MeasurementSet, ModelParams, TargetState
from .sensors import peb
from .simulate import sample_hardcore_scene, simulate_measurements

__all__ = [
    "METHODS",
    "child_rng",
    "run_simulate",
    "run_estimate",
    "run_evaluate",
    "run_sweep",
    "run_peb_map",
    "read_measurements",
    "read_truth",
    "read_estimates",
]

METHODS = ("mcmc", "dbscan", "oracle")
WORKERS_ENV = "COXSENSE_WORKERS"
OSPA_ORDER = 2.0
OSPA_CUTOFF = 10.0

TAG_SCENE = 0
TAG_MEASURE = 1
TAG_CHAIN = 2

_EXTENT_COLS = [f"e{i}" for i in range(1, 7)]


def child_rng(master_seed: int, tag: int, replication: int, epoch: int) -> np.random.Generator:
    """Deterministic per-(stage, replication, epoch) random stream."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(tag, replication, epoch)))


# -- delimited-text helpers ----------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


# -- simulation ------------------------------------------------------------------


def run_simulate(scenario: ScenarioConfig, seed: int, out_dir: str | Path, replication: int = 0) -> Path:
    """Simulate the scenario and dump per-epoch measurements and truth.

    One static scene persists across all epochs; every epoch contributes one
    scan per sensor.  Writes measurements.csv, truth.csv, associations.csv
    (simulated point origins, for the oracle), and metadata.csv (counts of
    out-of-domain detections dropped per scan).
    """
    out = Path(out_dir)
    scene_rng = child_rng(seed, TAG_SCENE, replication, 0)
    scene = sample_hardcore_scene(
        scene_rng, scenario.domain, scenario.intensity, scenario.hardcore_radius, scenario.extent_prior
    )
    meas_rows: list[list] = []
    assoc_rows: list[list] = []
    truth_rows: list[list] = []
    meta_rows: list[list] = []
    for epoch in range(scenario.epochs):
        for target_id, target in enumerate(scene):
            truth_rows.append([epoch, target_id, *target.center, *target.extent.params])
        rng = child_rng(seed, TAG_MEASURE, replication, epoch)
        sets = simulate_measurements(
            rng, scene, scenario.sensor_states(epoch), scenario.clutter_intensity, scenario.domain
        )
        for ms in sets:
            for idx, point in enumerate(ms.points):
                meas_rows.append([epoch, ms.sensor_index, *point])
                assoc_rows.append([epoch, ms.sensor_index, idx, int(ms.origins[idx])])
            meta_rows.append([epoch, ms.sensor_index, ms.n_dropped])
    _write_csv(out / "measurements.csv", ["epoch", "sensor_index", "x", "y", "z"], meas_rows)
    _write_csv(out / "truth.csv", ["epoch", "target_id", "cx", "cy", "cz", *_EXTENT_COLS], truth_rows)
    _write_csv(out / "associations.csv", ["epoch", "sensor_index", "point_index", "target_id"], assoc_rows)
    _write_csv(out / "metadata.csv", ["epoch", "sensor_index", "n_dropped"], meta_rows)
    return out


def read_measurements(data_dir: str | Path, n_sensors: int, epochs: int) -> list[list[MeasurementSet]]:
    """Per-epoch scans; origins attached when associations.csv is present."""
    data = Path(data_dir)
    _, rows = _read_csv(data / "measurements.csv")
    points: dict[tuple[int, int], list[list[float]]] = defaultdict(list)
    for row in rows:
        epoch, sensor = int(row[0]), int(row[1])
        points[(epoch, sensor)].append([float(v) for v in row[2:5]])
    origins: dict[tuple[int, int], list[int]] = defaultdict(list)
    assoc_path = data / "associations.csv"
    if assoc_path.exists():
        _, arews = _read_csv(assoc_path)
        for row in arews:
            origins[(int(row[0]), int(row[1]))].append(int(row[3]))
    scans = []
    for epoch in range(epochs):
        scan = []
        for sensor in range(n_sensors):
            pts = np.asarray(points.get((epoch, sensor), []), dtype=float).reshape(-1, 3)
            orig = origins.get((epoch, sensor))
            org_arr = np.asarray(orig, dtype=int) if orig is not None else None
            scan.append(MeasurementSet(sensor, pts, origins=org_arr))
        scans.append(scan)
    return scans


def read_truth(path: str | Path) -> dict[int, list[TargetState]]:
    _, rows = _read_csv(Path(path))
    by_epoch: dict[int, list[TargetState]] = defaultdict(list)
    for row in rows:
        epoch = int(row[0])
        center = np.array([float(v) for v in row[2:5]])
        extent = Extent(np.array([float(v) for v in row[5:11]]))
        by_epoch[epoch].append(TargetState(center, extent))
    return dict(by_epoch)


def read_estimates(path: str | Path) -> dict[int, list[TargetState]]:
    _, rows = _read_csv(Path(path))
    by_epoch: dict[int, list[TargetState]] = defaultdict(list)
    for row in rows:
        epoch = int(row[0])
        center = np.array([float(v) for v in row[3:6]])
        extent = Extent(np.array([float(v) for v in row[6:12]]))
        by_epoch[epoch].append(TargetState(center, extent))
    return dict(by_epoch)


# -- estimation ------------------------------------------------------------------


def _cumulative_sets(scans: list[list[MeasurementSet]], epoch: int, n_sensors: int) -> list[MeasurementSet]:
    """Scans 0..epoch flattened scan-major, re-indexed to the cumulative
    sensor-state list."""
    sets = []
    for t in range(epoch + 1):
        for k, ms in enumerate(scans[t]):
            sets.append(MeasurementSet(t * n_sensors + k, ms.points, origins=ms.origins))
    return sets


def run_estimate(
    scenario: ScenarioConfig,
    data_dir: str | Path,
    method: str,
    out_dir: str | Path,
    seed: int,
    replication: int = 0,
) -> Path:
    """Estimate target states per epoch with one method.

    Every epoch processes all scans collected so far.  The sampler starts
    from an empty configuration at the first epoch (its first update is a
    forced birth) and warm-starts from the previous epoch's estimate
    afterwards.  Writes estimates_<method>.csv, timing_<method>.csv, and
    chain diagnostics for the sampler.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    out = Path(out_dir)
    n_sensors = len(scenario.sensors)
    scans = read_measurements(data_dir, n_sensors, scenario.epochs)
    truth_path = Path(data_dir) / "truth.csv"
    truth = read_truth(truth_path) if truth_path.exists() else {}
    est_rows: list[list] = []
    timing_rows: list[list] = []
    diag_rows: list[list] = []
    previous: ModelParams | None = None
    for epoch in range(scenario.epochs):
        states = scenario.sensor_states_through(epoch)
        sets = _cumulative_sets(scans, epoch, n_sensors)
        started = time.perf_counter()
        iterations = 0
        if method == "mcmc":
            rng = child_rng(seed, TAG_CHAIN, replication, epoch)
            result = run_chain(
                rng,
                sets,
                states,
                scenario.domain,
                scenario.hardcore_radius,
                scenario.extent_prior,
                scenario.chain,
                initial=previous,
            )
            estimates = result.targets
            previous = result.params()
            iterations = result.total_iterations
            for record in result.trace:
                diag_rows.append([epoch, *record])
        elif method == "dbscan":
            search = dbscan_grid_search(
                sets,
                states,
                scenario.domain,
                scenario.hardcore_radius,
                scenario.extent_prior,
                list(scenario.dbscan.eps_grid),
                list(scenario.dbscan.min_pts_grid),
            )
            estimates = search.states
        else:
            if epoch not in truth:
                raise ValueError(f"oracle estimation requires {truth_path}")
            estimates = oracle_estimate(sets, truth[epoch], states)
        elapsed = time.perf_counter() - started
        for target_id, target in enumerate(estimates):
            est_rows.append([epoch, method, target_id, *target.center, *target.extent.params])
        timing_rows.append([epoch, elapsed, iterations])
    _write_csv(
        out / f"estimates_{method}.csv",
        ["epoch", "method", "target_id", "cx", "cy", "cz", *_EXTENT_COLS],
        est_rows,
    )
    _write_csv(out / f"timing_{method}.csv", ["epoch", "seconds", "iterations"], timing_rows)
    if method == "mcmc":
        _write_csv(
            out / "diagnostics_mcmc.csv",
            ["epoch", "iteration", "log_posterior", "cardinality", "intensity", "clutter_intensity", "accept_kind"],
            diag_rows,
        )
    return out


# -- evaluation ------------------------------------------------------------------


def _quantiles(values: list[float]) -> list[float]:
    return [float(q) for q in np.quantile(np.asarray(values), [0.0, 0.25, 0.5, 0.75, 1.0])]


def run_evaluate(truth_dir: str | Path, estimates_dir: str | Path, out_path: str | Path) -> Path:
    """Score every (replication, epoch, method) with the GW-OSPA metric.

    ``truth_dir`` and ``estimates_dir`` either contain rep*/ subdirectories
    (a sweep tree) or are single-replication directories.  Writes the OSPA
    table to ``out_path`` and per-(epoch, method) quantiles alongside it.
    """
    truth_root = Path(truth_dir)
    est_root = Path(estimates_dir)
    out_path = Path(out_path)
    rep_names = sorted(p.name for p in truth_root.glob("rep*") if p.is_dir())
    if rep_names:
        pairs = [(name, truth_root / name, est_root / name) for name in rep_names]
    else:
        pairs = [("0", truth_root, est_root)]
    methods = sorted(
        {p.name[len("estimates_") : -len(".csv")] for _, _, est in pairs for p in est.glob("estimates_*.csv")}
    )
    if not methods:
        raise FileNotFoundError(f"no estimates_*.csv files under {est_root}")
    rows: list[list] = []
    grouped: dict[tuple[int, str], list[float]] = defaultdict(list)
    for rep_name, truth_sub, est_sub in pairs:
        truth = read_truth(truth_sub / "truth.csv")
        for method in methods:
            est_path = est_sub / f"estimates_{method}.csv"
            if not est_path.exists():
                raise FileNotFoundError(f"replication {rep_name}: missing estimate file {est_path}")
            estimates = read_estimates(est_path)
            for epoch in sorted(truth):
                value = ospa(
                    estimates.get(epoch, []), truth[epoch], order=OSPA_ORDER, cutoff=OSPA_CUTOFF
                )
                rows.append([rep_name, epoch, method, value])
                grouped[(epoch, method)].append(value)
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    _write_csv(out_path, ["replication", "epoch", "method", "ospa"], rows)
    quant_rows = [
        [epoch, method, *_quantiles(values)]
        for (epoch, method), values in sorted(grouped.items())
    ]
    _write_csv(
        out_path.with_name(out_path.stem + "_quantiles.csv"),
        ["epoch", "method", "min", "q1", "median", "q3", "max"],
        quant_rows,
    )
    return out_path


# -- sweep -----------------------------------------------------------------------


def _replication_worker(args: tuple) -> str:
    scenario, seed, replication, rep_dir = args
    rep_dir = Path(rep_dir)
    run_simulate(scenario, seed, rep_dir, replication=replication)
    for method in METHODS:
        run_estimate(scenario, rep_dir, method, rep_dir, seed, replication=replication)
    (rep_dir / ".complete").touch()
    return rep_dir.name


def _worker_count(requested: int | None, reps: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if requested is None and env:
        requested = int(env)
    if requested is None:
        requested = os.cpu_count() or 1
    return max(1, min(requested, reps))


def run_sweep(
    scenario: ScenarioConfig,
    reps: int,
    seed: int,
    out_dir: str | Path,
    resume: bool = False,
    workers: int | None = None,
) -> Path:
    """Full experiment: simulate, estimate with every method, and evaluate,
    for ``reps`` replications with split seeds.

    Replications run in parallel (worker count from ``workers`` or the
    COXSENSE_WORKERS environment variable); with ``resume`` completed
    replications are skipped, and the final tables are rebuilt either way.
    Outputs: rep*/ trees, ospa.csv, ospa_quantiles.csv, and
    iteration_summary.csv (mean sampler iterations and wall seconds per
    epoch).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pending = []
    for rep in range(reps):
        rep_dir = out / f"rep{rep:03d}"
        if resume and (rep_dir / ".complete").exists():
            continue
        pending.append((scenario, seed, rep, rep_dir))
    n_workers = _worker_count(workers, max(len(pending), 1))
    if pending:
        if n_workers == 1:
            for job in pending:
                _replication_worker(job)
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                list(pool.map(_replication_worker, pending))
    run_evaluate(out, out, out / "ospa.csv")
    _write_iteration_summary(out, reps)
    return out


def _write_iteration_summary(out: Path, reps: int) -> None:
    iters: dict[int, list[float]] = defaultdict(list)
    secs: dict[int, list[float]] = defaultdict(list)
    for rep in range(reps):
        timing = out / f"rep{rep:03d}" / "timing_mcmc.csv"
        if not timing.exists():
            continue
        _, rows = _read_csv(timing)
        for row in rows:
            iters[int(row[0])].append(float(row[2]))
            secs[int(row[0])].append(float(row[1]))
    rows = [
        [epoch, float(np.mean(iters[epoch])), float(np.mean(secs[epoch]))]
        for epoch in sorted(iters)
    ]
    _write_csv(out / "iteration_summary.csv", ["epoch", "mean_iterations", "mean_seconds"], rows)


# -- field map export --------------------------------------------------------------


def run_peb_map(
    scenario: ScenarioConfig,
    sensor_index: int,
    height: float,
    nx: int,
    ny: int,
    out_path: str | Path,
) -> Path:
    """Export the position error bound of one sensor on a regular x-y grid
    at a fixed height; columns x, y, peb, x-major order."""
    if not 0 <= sensor_index < len(scenario.sensors):
        raise ValueError(f"sensor index {sensor_index} out of range")
    sensor = scenario.sensor_states(0)[sensor_index]
    xs = np.linspace(scenario.domain.lower[0], scenario.domain.upper[0], nx)
    ys = np.linspace(scenario.domain.lower[1], scenario.domain.upper[1], ny)
    rows = []
    for x in xs:
        for y in ys:
            rows.append([float(x), float(y), peb(sensor, np.array([x, y, height]))])
    out_path = Path(out_path)
    _write_csv(out_path, ["x", "y", "peb"], rows)
    return out_path
