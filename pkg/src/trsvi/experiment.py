"""End-to-end experiment runner: builds problems, runs configured methods
over seeds, records traces and samples, and evaluates MMD against ground
truth.

Artifact directory layout:

    manifest.yaml            fully resolved config, seeds, derived values
    problem.yaml             generated or copied problem spec
    ground_truth.csv[/.bin]  reference sample (when requested)
    inits/seed_<s>.csv       shared per-seed particle initializations
    runs/<label>/seed_<s>/   trace.csv and final.csv per method and seed
    metrics.yaml             MMD report (when requested)
    timings.csv              wall-clock seconds per run

Runs for different seeds are independent and may execute in parallel worker
processes; every file is produced by seeded, fixed-order computation, so
outputs are byte-identical regardless of the worker count.  The trace CSV
keeps its wall_ms column empty for the same reason; real timings go to
timings.csv.
"""

from __future__ import annotations

import csv
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import ADAGRAD, DECAYED, STATIC, StepSchedule, mp_svgd_step, svgd_step
from .config import (
    ConfigError,
    bundled_defaults,
    load_config,
    resolve_method_defaults,
    validate_config,
)
from .evaluation import MmdReference, gradient_magnitude, metropolis_reference
from .kernels import KernelSpec, LocalKernelFamily, median_heuristic
from .model import (
    BayesNetConfig,
    BayesNetModel,
    BayesNetSpec,
    SnlpConfig,
    SnlpModel,
    SnlpProblem,
    ancestral_sample,
    build_snlp,
    generate_bayes_net,
    load_problem,
    load_samples_binary,
    load_samples_csv,
    save_problem,
    save_samples_binary,
    save_samples_csv,
)
from .stein import (
    ParticleSet,
    field_from_context,
    global_context,
    global_stein_gradient,
    graphical_stein_gradient,
    hessian_stack_from_context,
)
from .trustregion import (
    IterationRecord,
    RunTrace,
    solve_subproblems,
    tr_svi_at_run,
    tr_svi_kl_run,
)

TRACE_COLUMNS = (
    "iteration",
    "gradient_magnitude",
    "radius_or_step",
    "rho",
    "approx_kl_u",
    "approx_kl_o",
    "accepted",
    "wall_ms",
)


def make_model(problem):
    if isinstance(problem, BayesNetSpec):
        return BayesNetModel(problem)
    if isinstance(problem, SnlpProblem):
        return SnlpModel(problem)
    raise TypeError(f"unsupported problem type {type(problem)!r}")


def build_problem(problem_cfg: dict):
    kind = problem_cfg["kind"]
    if kind == "bayes_net":
        cfg = BayesNetConfig(
            layer_sizes=tuple(problem_cfg["layer_sizes"]),
            max_parents=problem_cfg["max_parents"],
            gmm_nodes=problem_cfg["gmm_nodes"],
            mean_range=tuple(problem_cfg["mean_range"]),
            variance_range=tuple(problem_cfg["variance_range"]),
            seed=problem_cfg["seed"],
        )
        return generate_bayes_net(cfg)
    if kind == "snlp":
        cfg = SnlpConfig(
            unknowns=problem_cfg["unknowns"],
            anchors=problem_cfg["anchors"],
            side=problem_cfg["side"],
            radius=problem_cfg["radius"],
            noise_variance=problem_cfg["noise_variance"],
            noiseless=problem_cfg["noiseless"],
            seed=problem_cfg["seed"],
        )
        return build_snlp(cfg)
    return load_problem(problem_cfg["path"])


def default_init(problem) -> tuple[np.ndarray, float]:
    """Problem-family default for the Gaussian particle initializer."""
    if isinstance(problem, SnlpProblem):
        center = np.tile([problem.side / 2.0, problem.side / 2.0],
                         problem.n_unknowns)
        return center, problem.side / 4.0
    return np.zeros(problem.total_dim), 1.0


def initialize_particles(problem, run_cfg: dict, seed: int) -> ParticleSet:
    """I.i.d. Gaussian cloud around the configured (or default) center."""
    center, scale = default_init(problem)
    if run_cfg.get("init_center") is not None:
        configured = run_cfg["init_center"]
        if isinstance(configured, (int, float)):
            center = np.full_like(center, float(configured))
        else:
            configured = np.asarray(configured, dtype=float)
            if configured.shape != center.shape:
                raise ConfigError("run.init_center: wrong length for this problem")
            center = configured
    if run_cfg.get("init_scale") is not None:
        scale = float(run_cfg["init_scale"])
    rng = np.random.default_rng(seed)
    positions = center + scale * rng.standard_normal(
        (run_cfg["particles"], center.size)
    )
    return ParticleSet(positions, seed=seed)


def ground_truth_sample(problem, gt_cfg: dict) -> np.ndarray:
    count = gt_cfg["samples"]
    if isinstance(problem, BayesNetSpec):
        return ancestral_sample(problem, count, gt_cfg["seed"])
    model = make_model(problem)
    result = metropolis_reference(
        model,
        chain_length=count * gt_cfg["thinning"],
        proposal_scale=gt_cfg["proposal_scale"],
        burn_in=gt_cfg["burn_in"],
        thinning=gt_cfg["thinning"],
        seed=gt_cfg["seed"],
        initial=problem.true_positions.reshape(-1),
    )
    return result.samples


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow(
                [
                    _format_cell(r.iteration),
                    _format_cell(r.gradient_magnitude),
                    _format_cell(r.radius_or_step),
                    _format_cell(r.rho),
                    _format_cell(r.approx_kl_u),
                    _format_cell(r.approx_kl_o),
                    _format_cell(r.accepted),
                    _format_cell(r.wall_ms),
                ]
            )


def execute_method(problem, method_cfg: dict, lengthscale: float,
                   run_cfg: dict, seed: int) -> tuple[ParticleSet, RunTrace]:
    """Run one method from the shared per-seed initialization."""
    model = make_model(problem)
    particles = initialize_particles(problem, run_cfg, seed)
    kernel = KernelSpec(lengthscale)
    family = LocalKernelFamily(kernel, model.layout)
    name = method_cfg["name"]
    iterations = method_cfg["iterations"]

    if name == "tr-svi-at":
        return tr_svi_at_run(particles, model, family, iterations)
    if name == "tr-svi-kl":
        return tr_svi_kl_run(
            particles, model, family, method_cfg["initial_radius"], iterations,
            seed=seed, nystrom_size=method_cfg.get("nystrom_size"),
        )
    if name == "svn-ctr":
        radius = method_cfg["radius"]
        trace = RunTrace()
        current = particles
        for t in range(iterations):
            ctx = global_context(current.positions, model.layout, kernel)
            field = field_from_context(ctx, model)
            hessians = hessian_stack_from_context(ctx, model)
            steps, _, _ = solve_subproblems(field, hessians, radius)
            current = current.advanced(current.positions + steps)
            trace.append(
                IterationRecord(t, gradient_magnitude(field), radius,
                                accepted=True)
            )
        return current, trace

    # first-order updates
    if name == "svgd":
        step = method_cfg["step"]
        trace = RunTrace()
        current = particles
        for t in range(iterations):
            field = global_stein_gradient(current, model, kernel)
            current = svgd_step(current, model, kernel, step, field=field)
            trace.append(
                IterationRecord(t, gradient_magnitude(field), step,
                                accepted=True)
            )
        return current, trace

    kind = {"mp-svgd-static": STATIC, "mp-svgd-dlr": DECAYED,
            "mp-svgd-ag": ADAGRAD}[name]
    schedule = StepSchedule(
        kind, method_cfg["step"], decay=method_cfg.get("decay", 1.0)
    )
    trace = RunTrace()
    current = particles
    for t in range(iterations):
        field = graphical_stein_gradient(current, model, family)
        current = mp_svgd_step(current, model, family, schedule, t, field=field)
        scale = schedule.initial_step
        if kind == DECAYED:
            scale = schedule.initial_step * schedule.decay**t
        trace.append(
            IterationRecord(t, gradient_magnitude(field), scale, accepted=True)
        )
    return current, trace


def _run_task(payload: dict) -> dict:
    """One (method, seed) run; executed possibly in a worker process."""
    problem = payload["problem"]
    model = make_model(problem)
    started = time.perf_counter()
    final, trace = execute_method(
        problem, payload["method"], payload["lengthscale"], payload["run"],
        payload["seed"],
    )
    elapsed = time.perf_counter() - started
    run_dir = Path(payload["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(run_dir / "trace.csv", trace)
    save_samples_csv(run_dir / "final.csv", final.positions,
                     model.dimension_names())
    if payload["binary"]:
        save_samples_binary(run_dir / "final.bin", final.positions)
    return {
        "label": payload["method"]["label"],
        "seed": payload["seed"],
        "iterations": len(trace.records),
        "wall_s": elapsed,
        "warnings": list(trace.warnings),
    }


def resolve_lengthscale(kernel_cfg: dict, problem, ground_truth, mmd_seed: int):
    """Numeric kernel lengthscale plus a note on where it came from."""
    configured = kernel_cfg["lengthscale"]
    if isinstance(configured, (int, float)):
        return float(configured), "config"
    kind = "snlp" if isinstance(problem, SnlpProblem) else "bayes_net"
    model = make_model(problem)
    if configured == "table":
        return (
            bundled_defaults(kind, model.layout.total_dim)["lengthscale"],
            "bundled table",
        )
    return median_heuristic(ground_truth, seed=mmd_seed), "median of ground truth"


def run_experiment(config, output_dir, seed_override: int | None = None,
                   workers: int = 1) -> Path:
    """Run a full configured experiment into a fresh artifact directory."""
    if not isinstance(config, dict):
        config = load_config(config)
    config = validate_config(config)
    if seed_override is not None:
        config["run"]["seeds"] = [int(seed_override)]

    out = Path(output_dir)
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"output directory {out} exists and is not empty")
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _run_experiment_body(config, out, workers)
    except BaseException:
        # never leave partial artifacts behind
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for child in out.iterdir():
                if child.is_dir():
                    shutil.rmtree(child, ignore_errors=True)
                else:
                    child.unlink(missing_ok=True)
        raise


def _run_experiment_body(config: dict, out: Path, workers: int) -> Path:
    problem = build_problem(config["problem"])
    model = make_model(problem)
    kind = "snlp" if isinstance(problem, SnlpProblem) else "bayes_net"
    config = resolve_method_defaults(config, kind, model.layout.total_dim)
    save_problem(out / "problem.yaml", problem)

    gt_cfg = config["output"]["ground_truth"]
    ground_truth = None
    if gt_cfg["samples"] > 0:
        ground_truth = ground_truth_sample(problem, gt_cfg)
        save_samples_csv(out / "ground_truth.csv", ground_truth,
                         model.dimension_names())
        if config["output"]["binary_samples"]:
            save_samples_binary(out / "ground_truth.bin", ground_truth)

    lengthscale, ls_source = resolve_lengthscale(
        config["kernel"], problem, ground_truth, config["output"]["mmd_seed"]
    )

    init_center, init_scale = default_init(problem)
    manifest = {
        "schema_version": 1,
        "package_version": __version__,
        "problem": {**config["problem"], "total_dim": model.layout.total_dim,
                    "n_factors": model.layout.n_factors},
        "kernel": {"lengthscale": float(lengthscale),
                   "lengthscale_source": ls_source},
        "method": config["method"],
        "run": {
            **config["run"],
            "resolved_init_center": [float(v) for v in np.atleast_1d(
                config["run"]["init_center"]
                if config["run"]["init_center"] is not None else init_center
            )],
            "resolved_init_scale": float(
                config["run"]["init_scale"]
                if config["run"]["init_scale"] is not None else init_scale
            ),
        },
        "output": {
            **config["output"],
            "median_heuristic_subsample_cap": 10_000,
        },
        "problem_warnings": list(getattr(problem, "warnings", ())),
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))

    inits_dir = out / "inits"
    inits_dir.mkdir()
    for seed in config["run"]["seeds"]:
        init = initialize_particles(problem, config["run"], seed)
        save_samples_csv(inits_dir / f"seed_{seed}.csv", init.positions,
                         model.dimension_names())

    tasks = [
        {
            "problem": problem,
            "method": method,
            "lengthscale": lengthscale,
            "run": config["run"],
            "seed": seed,
            "run_dir": str(out / "runs" / method["label"] / f"seed_{seed}"),
            "binary": config["output"]["binary_samples"],
        }
        for method in config["method"]
        for seed in config["run"]["seeds"]
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]

    with open(out / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "seed", "iterations", "wall_s"])
        for r in results:
            writer.writerow([r["label"], r["seed"], r["iterations"],
                             repr(float(r["wall_s"]))])

    if config["output"]["mmd"]:
        evaluate_artifact(out)
    return out


def evaluate_artifact(artifact_dir) -> dict:
    """(Re)compute the MMD report for every run in an artifact directory."""
    out = Path(artifact_dir)
    manifest = yaml.safe_load((out / "manifest.yaml").read_text())
    if (out / "ground_truth.bin").exists():
        ground_truth = load_samples_binary(out / "ground_truth.bin")
    elif (out / "ground_truth.csv").exists():
        ground_truth, _ = load_samples_csv(out / "ground_truth.csv")
    else:
        raise ConfigError(
            f"artifact {out} has no ground-truth sample; rerun with "
            "output.ground_truth.samples > 0 to enable evaluation"
        )
    cap = manifest["output"]["mmd_subsample_cap"]
    mmd_seed = manifest["output"]["mmd_seed"]
    reference = ground_truth
    if reference.shape[0] > cap:
        rng = np.random.default_rng(mmd_seed)
        keep = np.sort(rng.choice(reference.shape[0], size=cap, replace=False))
        reference = reference[keep]
    kernel = KernelSpec(median_heuristic(ground_truth, seed=mmd_seed))
    scorer = MmdReference(reference, kernel)

    report = {
        "metric": "mmd",
        "kernel_lengthscale": float(kernel.lengthscale),
        "ground_truth_size": int(ground_truth.shape[0]),
        "reference_size_after_subsample": int(reference.shape[0]),
        "subsample_seed": int(mmd_seed),
        "methods": {},
    }
    for method in manifest["method"]:
        label = method["label"]
        values = []
        for seed in manifest["run"]["seeds"]:
            final, _ = load_samples_csv(out / "runs" / label / f"seed_{seed}" / "final.csv")
            values.append(scorer.value(final))
        report["methods"][label] = {
            "per_seed": [float(v) for v in values],
            "mean": float(np.mean(values)),
            "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
        }
    (out / "metrics.yaml").write_text(yaml.safe_dump(report, sort_keys=False))
    return report


def export_marginals(samples_csv, problem_path, factor_indices,
                     output_dir) -> list[Path]:
    """Write one CSV per requested factor with that factor's columns."""
    samples, names = load_samples_csv(samples_csv)
    problem = load_problem(problem_path)
    layout = make_model(problem).layout
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for a in factor_indices:
        if not 0 <= a < layout.n_factors:
            raise ValueError(f"unknown factor index {a}")
        dims = layout.factors[a]
        path = out / f"factor_{a}.csv"
        save_samples_csv(path, samples[:, dims], [names[d] for d in dims])
        paths.append(path)
    return paths
