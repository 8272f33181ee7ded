import argparse
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from .config import Config, ExperimentConfig
from .derivation import derive
from .dump import write_csv, write_field_dump, write_modulation_dump
from .errors import AcceptanceError, ConfigError, DelayNotObservedError, LabError
from .geometry import ChartId, ChartPoint, FrozenSlowFlow, SlowTrajectory
from .models import ModelId, ModelSpec
from .modulation import ModulationState, evolve_across_charts, initial_amplitudes, modulation_grid, stepper_for
from .physical import Grid, SolverConfig, initial_state, linear_growth_probe, simulate
from .spectra import M4_SERIES_LIMIT, dispersion_frame, unstable_band
from .utils import platform_fingerprint, project_version, run_generator, setup_logging, worker_count
from .validate import (
    MAX_MODULATION_DT, VALIDITY_MODELS, delay_run, dynamic_error_bound, dynamic_validity_run, fit_scaling, report_frame,
    residual_scaling, static_validity_sweep, write_plot_data,
)

# Configure logging
setup_logging()

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_ACCEPTANCE = 4

RESIDUAL_SLOPE = (2.6, 3.4)
PROBE_XI = (0.02, 0.05, 0.1)
PROBE_TOLERANCE = 0.10
SWEEP_COLUMNS = ["run", "delta", "eps", "mu0", "t_takeoff", "mu_takeoff", "mu_predicted", "relative_error"]


def sweep_entry(task):
    """One delayed-passage run of a sweep. Module level so worker processes can unpickle it."""
    index, model, delta, eps, seed, kind, amp0, threshold, cfg = task
    mu0 = -delta * delta
    row = {"run": index, "delta": delta, "eps": eps, "mu0": mu0}
    try:
        t_takeoff, mu_takeoff, mu_pred = delay_run(model, eps, mu0, amp0, threshold, cfg, kind,
                                                   run_generator(seed, index))
    except DelayNotObservedError as e:
        logging.warning(f"Sweep run {index} (delta={delta}, eps={eps}): {e}")
        t_takeoff, mu_takeoff, mu_pred = math.nan, math.nan, math.nan
    row.update({
        "t_takeoff": t_takeoff,
        "mu_takeoff": mu_takeoff,
        "mu_predicted": mu_pred,
        "relative_error": abs(mu_takeoff - mu_pred) / mu_pred if mu_pred > 0 else math.nan,
    })
    return row


class Orchestrator:
    """
    Runs one experiment described by an ExperimentConfig and writes its
    artifacts, a manifest and a summary into the output directory.
    """
    def __init__(self, experiment=None, settings=None):
        self.settings = settings or Config()
        self.experiment = experiment or ExperimentConfig()
        self.model = self._model()
        self.summary = []
        self.artifacts = []

        name = self.experiment.get("experiment", "name") or f"{self.kind}_{self.model.id.value}"
        self.output_dir = self.experiment.get("experiment", "output_dir") or os.path.join(
            self.settings.get("output_dir"), name)

    @property
    def kind(self):
        return self.experiment.get("experiment", "kind")

    @property
    def seed(self):
        return self.experiment.get("experiment", "seed")

    def _model(self):
        section = self.experiment.section("model")
        return ModelSpec.create(section["id"], a=section["a"], d1=section["d1"], d2=section["d2"],
                                dimension=section["dimension"])

    def _path(self, name):
        return os.path.join(self.output_dir, name)

    def _csv(self, name, frame):
        self.artifacts.append(name)
        return write_csv(self._path(name), frame)

    def _solver_config(self):
        solver = self.experiment.section("solver")
        return SolverConfig.for_model(
            self.model,
            dt=solver["dt"] or None,
            scheme=solver["scheme"],
            dealias=solver["dealias"],
            nonlinear=solver["nonlinear"],
            record_stride=solver["record_stride"] or self.settings.get("record_stride"),
        )

    def run(self):
        """Dispatches on the experiment kind; returns the list of artifact names."""
        logging.info(f"Starting {self.kind} for {self.model.describe()} (seed {self.seed}) in {self.output_dir}")
        os.makedirs(self.output_dir, exist_ok=True)
        handlers = {
            "spectra": self.run_spectra,
            "simulate": self.run_simulate,
            "derive": self.run_derive,
            "validate": self.run_validate,
            "sweep": self.run_sweep,
        }
        try:
            handlers[self.kind]()
        finally:
            self.write_manifest()
        logging.info(f"Finished {self.kind}; {len(self.artifacts)} artifacts in {self.output_dir}")
        return self.artifacts

    def run_spectra(self):
        spectra = self.experiment.section("spectra")
        xi = np.linspace(spectra["xi_min"], spectra["xi_max"], spectra["xi_points"])
        method = spectra["method"]
        if self.model.id is ModelId.KOLMOGOROV and method == "series" and np.max(np.abs(xi)) > M4_SERIES_LIMIT:
            logging.warning(f"xi range exceeds the long-wave series window |xi| <= {M4_SERIES_LIMIT}; using the numeric eigenproblem")
            method = "numeric"
        frame = dispersion_frame(self.model, spectra["mu"], xi, method)
        self._csv("spectra.csv", frame)
        self.summary.append(f"dispersion at mu={spectra['mu']:g} over {len(xi)} wavenumbers ({method})")
        delta = math.sqrt(spectra["mu"]) if spectra["mu"] > 0 else 0.0
        if 0 < delta <= 0.5:
            low, high = unstable_band(self.model, delta)
            self.summary.append(f"unstable band at delta={delta:.6g}: [{low:.12g}, {high:.12g}]")

    def run_derive(self):
        result = derive(self.model)
        report = result.report()
        with open(self._path("derivation.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write(report)
        self.artifacts.append("derivation.txt")
        logging.info(f"Wrote {self._path('derivation.txt')}")
        self.summary.append(report[report.index("Coefficients:"):].rstrip("\n"))

    def run_simulate(self):
        if self.experiment.get("experiment", "level") == "modulation":
            self._simulate_modulation()
        else:
            self._simulate_physical()

    def _simulate_physical(self):
        grid_section = self.experiment.section("grid")
        experiment = self.experiment.section("experiment")
        n_y = grid_section["cross_points"] if self.model.id is ModelId.KOLMOGOROV else None
        grid = Grid.for_model(self.model, grid_section["points"], grid_section["length"] or None, n_y)
        cfg = self._solver_config()
        initial = initial_state(self.model, grid, experiment["mu0"], experiment["eps"], experiment["initial"],
                                experiment["amplitude"], run_generator(self.seed, 0))
        trajectory = simulate(self.model, initial, self.experiment.get("solver", "t_end"), cfg)
        self._csv("trajectory.csv", trajectory.frame())
        write_field_dump(self._path("final.bin"), self.model, trajectory.final)
        self.artifacts.append("final.bin")
        final = trajectory.final
        self.summary.append(f"physical run to t={final.time:.6g}: mu={final.mu:.6g}, sup-norms {final.sup_norms()}")

    def _slow_flow(self):
        geometry = self.experiment.section("geometry")
        beta = geometry["beta"] or self.model.beta
        if geometry["chart"] == "static":
            return FrozenSlowFlow(geometry["slow"], r=geometry["r"], beta=beta)
        return SlowTrajectory(ChartPoint(ChartId.parse(geometry["chart"]), geometry["r"], geometry["slow"], beta))

    def _simulate_modulation(self):
        grid_section = self.experiment.section("grid")
        experiment = self.experiment.section("experiment")
        geometry = self.experiment.section("geometry")
        grid = modulation_grid(self.model, grid_section["mod_points"] or self.settings.get("mod_points"),
                               grid_section["mod_length"] or self.settings.get("mod_length"))
        amplitudes = initial_amplitudes(self.model, grid, experiment["initial"], experiment["amplitude"],
                                        run_generator(self.seed, 0))
        state = ModulationState(self.model, amplitudes, grid, self._slow_flow(), frame=geometry["frame"])
        solver = self.experiment.section("solver")
        run = evolve_across_charts(
            state, stepper_for(self.model), solver["t_end"], solver["dt"] or MAX_MODULATION_DT,
            record_stride=solver["record_stride"] or self.settings.get("record_stride"),
            k1_to_k2=geometry["k1_to_k2"], k2_to_k3=geometry["k2_to_k3"],
        )
        frame = run.frame()
        frame.insert(1, "chart", [r.chart.value if r.chart else "static" for r in run.records])
        self._csv("modulation.csv", frame)
        write_modulation_dump(self._path("final_modulation.bin"), run.final)
        self.artifacts.append("final_modulation.bin")
        final = run.final
        chart = final.chart.value if final.chart else "static"
        self.summary.append(f"modulation run ends in {chart} at tbar={final.tbar:.6g}, sup-norm {final.sup_norm():.6g}")

    def run_validate(self):
        validate = self.experiment.section("validate")
        if self.model.id in VALIDITY_MODELS:
            self._validate_static(validate)
        elif self.model.id is ModelId.KOLMOGOROV:
            self._validate_kolmogorov_probe(validate)
        else:
            raise ConfigError(f"No validation suite for {self.model.id.value}; use m1, m2 or m4")

    def _validate_static(self, validate):
        deltas = validate["deltas"]
        reports, fit = static_validity_sweep(self.model, deltas, mod_points=validate["mod_points"])
        rows = [{"delta": d, "eps": 0.0, "max_error": r.max_error, "slope": fit.slope}
                for d, r in zip(deltas, reports)]
        for delta, report in zip(deltas, reports):
            self._csv(f"errors_delta_{delta:g}.csv", report.frame())
        self.summary.append(f"sup-norm error slope {fit.slope:.4f} (95% interval {fit.interval[0]:.4f}, {fit.interval[1]:.4f})")

        residual_fit = None
        if self.model.id is ModelId.SWIFT_HOHENBERG:
            values, residual_fit = residual_scaling(self.model, deltas)
            for row in rows:
                row["residual_slope"] = residual_fit.slope
            self.summary.append(f"residual slope {residual_fit.slope:.4f}")

        dynamic = None
        if validate["dynamic"]:
            dynamic = dynamic_validity_run(self.model, validate["dynamic_eps"], validate["dynamic_mu0"])
            max_r = dynamic.runs_metadata["max_r"]
            bound = dynamic_error_bound(fit, max_r)
            self._csv("dynamic_errors.csv", dynamic.frame())
            rows.append({"eps": validate["dynamic_eps"], "max_error": dynamic.max_error})
            self.summary.append(f"dynamic run (eps {validate['dynamic_eps']:g}, max r {max_r:.4g}): "
                                f"max error {dynamic.max_error:.4g}, bound {bound:.4g}")

        self._csv("validation.csv", report_frame(rows))
        self.artifacts.append("validation_plot.csv")
        write_plot_data(self._path("validation_plot.csv"), deltas, [r.max_error for r in reports],
                        names=("delta", "max_error"))
        logging.info(f"{self.model.id.value}: fitted error slope {fit.slope:.4f}")

        if validate["check"]:
            low, high = validate["slope_min"], validate["slope_max"]
            if not fit.contains(low, high):
                raise AcceptanceError(f"Error slope {fit.slope:.4f} is outside [{low}, {high}]")
            if residual_fit is not None and not residual_fit.contains(*RESIDUAL_SLOPE):
                raise AcceptanceError(f"Residual slope {residual_fit.slope:.4f} is outside {list(RESIDUAL_SLOPE)}")
            if dynamic is not None and dynamic.max_error > bound:
                raise AcceptanceError(f"Dynamic error {dynamic.max_error:.4g} exceeds the bound {bound:.4g}")

    def _validate_kolmogorov_probe(self, validate):
        rows = []
        for xi in PROBE_XI:
            measured = linear_growth_probe(self.model, xi, 0.0)
            expected = -3.0 * xi ** 4
            rows.append({
                "xi": xi,
                "measured": measured.rate,
                "stderr": measured.stderr,
                "expected": expected,
                "relative_error": abs(measured.rate - expected) / abs(expected),
                "reduced_precision": measured.reduced_precision,
            })
        frame = pd.DataFrame(rows, columns=["xi", "measured", "stderr", "expected", "relative_error",
                                            "reduced_precision"])
        self._csv("growth_probe.csv", frame)
        worst = float(frame["relative_error"].max())
        self.summary.append(f"long-wave growth probe: worst relative error {worst:.4f}")
        if validate["check"] and worst > PROBE_TOLERANCE:
            raise AcceptanceError(f"Growth probe deviates by {worst:.4f} from -3 xi^4 (tolerance {PROBE_TOLERANCE})")

    def run_sweep(self):
        sweep = self.experiment.section("sweep")
        validate = self.experiment.section("validate")
        cfg = self._solver_config()
        tasks = [
            (index, self.model, delta, eps, self.seed, self.experiment.get("experiment", "initial"),
             validate["amp0"], validate["threshold"], cfg)
            for index, (delta, eps) in enumerate(itertools.product(sweep["deltas"], sweep["eps"]))
        ]
        workers = min(worker_count(sweep["workers"] or self.settings.get("workers")), len(tasks))
        logging.info(f"Sweeping {len(tasks)} runs on {workers} workers")
        if workers <= 1:
            rows = [sweep_entry(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(sweep_entry, tasks))
        rows.sort(key=lambda row: row["run"])
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        self._csv("sweep.csv", frame)
        observed = frame[frame["mu_takeoff"] > 0]
        self.summary.append(f"{len(observed)} of {len(frame)} runs took off")
        if len(observed) >= 2 and observed["eps"].nunique() >= 2:
            fit = fit_scaling(observed["eps"], observed["mu_takeoff"].abs())
            self.summary.append(f"take-off scaling in eps: slope {fit.slope:.4f}")

    def write_manifest(self):
        """Config echo, version and platform fingerprint, and the summary text."""
        with open(self._path("manifest.cfg"), "w", encoding="utf-8", newline="\n") as f:
            f.write(self.experiment.dumps())
        manifest = {
            "kind": self.kind,
            "model": self.model.describe(),
            "seed": self.seed,
            "version": project_version(),
            "platform": platform_fingerprint(),
            "artifacts": self.artifacts,
        }
        with open(self._path("manifest.json"), "w", encoding="utf-8", newline="\n") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        with open(self._path("summary.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join([f"{self.kind} {self.model.describe()} seed={self.seed}"] + self.summary) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(description="Dynamic modulation lab: slow passage through instabilities")
    subparsers = parser.add_subparsers(dest="command", help="Experiment to run")

    for name, description in (
        ("spectra", "Dispersion relation and unstable band"),
        ("simulate", "Direct or modulation-level simulation"),
        ("derive", "Symbolic derivation of the modulation equation"),
        ("validate", "Validity and residual scaling checks"),
        ("sweep", "Delayed stability loss over (delta, eps)"),
    ):
        sub = subparsers.add_parser(name, help=description)
        sub.add_argument("--config", type=str, help="Experiment config file")
        sub.add_argument("--out", type=str, help="Output directory")
        sub.add_argument("--seed", type=str, help="Random seed")
        sub.add_argument("--model", type=str, help="Model id (m1, m2, m3, m4)")
        sub.add_argument("--a", type=str, help="Brusselator a")
        sub.add_argument("--d1", type=str, help="Brusselator d1")
        sub.add_argument("--d2", type=str, help="Brusselator d2")
        sub.add_argument("--dimension", type=str, help="Number of unbounded directions")
        sub.add_argument("--mu", type=str, help="Bifurcation parameter (spectra) or mu(0) (simulate)")
        sub.add_argument("--eps", type=str, help="Drift rate, or a comma-separated list for sweeps")
        sub.add_argument("--deltas", type=str, help="Comma-separated delta values")
        sub.add_argument("--t-end", type=str, help="Final time")
        sub.add_argument("--dt", type=str, help="Time step")
        sub.add_argument("--points", type=str, help="Grid points per unbounded direction")
        sub.add_argument("--level", type=str, help="physical or modulation")
        sub.add_argument("--scheme", type=str, help="etdrk4 or imex-bdf2")
        sub.add_argument("--workers", type=str, help="Sweep worker processes")
    return parser


def experiment_from_args(args):
    """Config file (or defaults) with the command-line overrides applied."""
    experiment = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    command = args.command
    experiment.set("experiment", "kind", command)
    overrides = {
        "out": ("experiment", "output_dir"),
        "seed": ("experiment", "seed"),
        "model": ("model", "id"),
        "a": ("model", "a"),
        "d1": ("model", "d1"),
        "d2": ("model", "d2"),
        "dimension": ("model", "dimension"),
        "mu": ("spectra", "mu") if command == "spectra" else ("experiment", "mu0"),
        "eps": ("sweep", "eps") if command == "sweep" else ("experiment", "eps"),
        "deltas": ("sweep", "deltas") if command == "sweep" else ("validate", "deltas"),
        "t_end": ("solver", "t_end"),
        "dt": ("solver", "dt"),
        "points": ("grid", "mod_points") if args.level == "modulation" else ("grid", "points"),
        "level": ("experiment", "level"),
        "scheme": ("solver", "scheme"),
        "workers": ("sweep", "workers"),
    }
    for attribute, (section, key) in overrides.items():
        value = getattr(args, attribute)
        if value is not None:
            experiment.set(section, key, value)
    return experiment


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    settings = Config()
    setup_logging(settings.get("log_level"))

    context = args.command
    try:
        experiment = experiment_from_args(args)
        orchestrator = Orchestrator(experiment, settings)
        context = f"{args.command} ({orchestrator.model.describe()})"
        orchestrator.run()
    except ConfigError as e:
        logging.error(f"{context}: configuration error: {e}")
        return EXIT_CONFIG
    except AcceptanceError as e:
        logging.error(f"{context}: acceptance check failed: {e}")
        return EXIT_ACCEPTANCE
    except (LabError, ValueError) as e:
        logging.error(f"{context}: {type(e).__name__}: {e}")
        return EXIT_RUNTIME
    return EXIT_OK

if __name__ == "__main__":
    sys.exit(main())
