"""Experiment configuration: schema validation with path-to-field
diagnostics, bundled default hyperparameters, and default resolution.

A config is a YAML tree with sections problem / method / kernel / run /
output.  The method section may be a single mapping or a list of mappings.
Defaults for step sizes, radii, and kernel lengthscales come from a bundled
per-problem-family table and are resolved against the generated problem's
dimension; every resolved value lands in the run manifest.
"""

from __future__ import annotations

from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the bad field."""


METHOD_NAMES = (
    "tr-svi-at",
    "tr-svi-kl",
    "mp-svgd-static",
    "mp-svgd-dlr",
    "mp-svgd-ag",
    "svgd",
    "svn-ctr",
)

FIRST_ORDER = ("mp-svgd-static", "mp-svgd-dlr", "mp-svgd-ag", "svgd")

# Per-family tuning table: kernel lengthscale, decayed-step (initial, decay),
# AdaGrad initial step, and the constant trust-region radius.  Keys are the
# state dimensions of the four reference problem families.
BUNDLED_DEFAULTS = {
    "snlp": {
        12: {"lengthscale": 1.0, "dlr": (0.1, 0.99), "adagrad_step": 0.5,
             "svn_radius": 1.0},
        100: {"lengthscale": 3.0, "dlr": (0.1, 0.99), "adagrad_step": 0.5,
              "svn_radius": 0.1},
    },
    "bayes_net": {
        30: {"lengthscale": 10.0, "dlr": (0.01, 0.999), "adagrad_step": 0.05,
             "svn_radius": 0.1},
        80: {"lengthscale": 60.0, "dlr": (0.01, 0.99), "adagrad_step": 0.05,
             "svn_radius": 0.1},
    },
}


def bundled_defaults(kind: str, total_dim: int) -> dict:
    """Tuning defaults of the bundled family nearest in dimension."""
    families = BUNDLED_DEFAULTS["snlp" if kind == "snlp" else "bayes_net"]
    key = min(families, key=lambda d: abs(d - total_dim))
    return families[key]


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _as_mapping(value, path: str) -> dict:
    _expect(isinstance(value, dict), path, "expected a mapping")
    return value


def _positive_number(value, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            path, "expected a number")
    _expect(value > 0, path, "must be positive")
    return float(value)


def _nonneg_int(value, path: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool),
            path, "expected an integer")
    _expect(value >= 0, path, "must be nonnegative")
    return value


def load_config(path) -> dict:
    raw = yaml.safe_load(Path(path).read_text())
    _expect(isinstance(raw, dict), "<root>", "config must be a mapping")
    return raw


def validate_config(raw: dict) -> dict:
    """Structural validation plus static defaults.

    Returns a normalized copy; numeric defaults that depend on the problem
    dimension stay as the string "table" until resolve_method_defaults.
    """
    out = {}
    _expect("problem" in raw, "problem", "section is required")
    problem = dict(_as_mapping(raw["problem"], "problem"))
    kind = problem.get("kind")
    _expect(kind in ("bayes_net", "snlp", "file"), "problem.kind",
            "expected one of bayes_net, snlp, file")
    if kind == "bayes_net":
        sizes = problem.get("layer_sizes")
        _expect(isinstance(sizes, list) and sizes, "problem.layer_sizes",
                "expected a nonempty list of layer sizes")
        for i, s in enumerate(sizes):
            _expect(isinstance(s, int) and s >= 1, f"problem.layer_sizes[{i}]",
                    "layer sizes must be integers >= 1")
        problem.setdefault("max_parents", 3)
        _expect(problem["max_parents"] >= 1, "problem.max_parents", "must be >= 1")
        problem.setdefault("gmm_nodes", 0)
        _nonneg_int(problem["gmm_nodes"], "problem.gmm_nodes")
        problem.setdefault("mean_range", [0.0, 2.0])
        problem.setdefault("variance_range", [1e-3, 1.0])
        for key in ("mean_range", "variance_range"):
            rng = problem[key]
            _expect(isinstance(rng, list) and len(rng) == 2, f"problem.{key}",
                    "expected [low, high]")
        _expect(problem["variance_range"][0] > 0, "problem.variance_range",
                "lower bound must be positive")
        problem.setdefault("seed", 0)
    elif kind == "snlp":
        for key in ("unknowns", "anchors"):
            _expect(key in problem, f"problem.{key}", "field is required")
        _expect(problem["unknowns"] >= 1, "problem.unknowns", "must be >= 1")
        _nonneg_int(problem["anchors"], "problem.anchors")
        for key, default in (("side", 6.0), ("radius", 3.0),
                             ("noise_variance", 0.01)):
            problem.setdefault(key, default)
            _positive_number(problem[key], f"problem.{key}")
        problem.setdefault("noiseless", False)
        _expect(isinstance(problem["noiseless"], bool), "problem.noiseless",
                "expected a boolean")
        problem.setdefault("seed", 0)
    else:
        _expect(isinstance(problem.get("path"), str), "problem.path",
                "expected a path to a problem spec file")
    out["problem"] = problem

    kernel = dict(_as_mapping(raw.get("kernel", {}), "kernel"))
    ls = kernel.setdefault("lengthscale", "table")
    if isinstance(ls, str):
        _expect(ls in ("table", "median"), "kernel.lengthscale",
                'expected a positive number, "table", or "median"')
    else:
        _positive_number(ls, "kernel.lengthscale")
    out["kernel"] = kernel

    _expect("method" in raw, "method", "section is required")
    methods_raw = raw["method"]
    if isinstance(methods_raw, dict):
        methods_raw = [methods_raw]
    _expect(isinstance(methods_raw, list) and methods_raw, "method",
            "expected a method mapping or a nonempty list of them")
    methods = []
    seen_labels = set()
    for i, m in enumerate(methods_raw):
        m = dict(_as_mapping(m, f"method[{i}]"))
        name = m.get("name")
        _expect(name in METHOD_NAMES, f"method[{i}].name",
                f"expected one of {', '.join(METHOD_NAMES)}")
        m.setdefault("iterations", 300)
        _nonneg_int(m["iterations"], f"method[{i}].iterations")
        m.setdefault("label", name)
        _expect(m["label"] not in seen_labels, f"method[{i}].label",
                "labels must be unique across methods")
        seen_labels.add(m["label"])
        if name == "tr-svi-kl":
            m.setdefault("initial_radius", 1.0)
            _positive_number(m["initial_radius"], f"method[{i}].initial_radius")
        if name in FIRST_ORDER and "step" in m:
            _positive_number(m["step"], f"method[{i}].step")
        if name in ("mp-svgd-dlr",) and "decay" in m:
            _expect(0.0 < m["decay"] <= 1.0, f"method[{i}].decay",
                    "must lie in (0, 1]")
        if name == "svn-ctr" and "radius" in m:
            _positive_number(m["radius"], f"method[{i}].radius")
        methods.append(m)
    out["method"] = methods

    run = dict(_as_mapping(raw.get("run", {}), "run"))
    run.setdefault("particles", 200)
    _expect(run["particles"] >= 1, "run.particles", "must be >= 1")
    run.setdefault("seeds", [0, 1, 2, 3, 4])
    seeds = run["seeds"]
    _expect(isinstance(seeds, list) and seeds, "run.seeds",
            "expected a nonempty list of integers")
    for i, s in enumerate(seeds):
        _expect(isinstance(s, int) and not isinstance(s, bool),
                f"run.seeds[{i}]", "expected an integer")
    run.setdefault("init_center", None)
    run.setdefault("init_scale", None)
    if run["init_scale"] is not None:
        _positive_number(run["init_scale"], "run.init_scale")
    out["run"] = run

    output = dict(_as_mapping(raw.get("output", {}), "output"))
    gt = dict(_as_mapping(output.get("ground_truth", {}), "output.ground_truth"))
    gt.setdefault("samples", 0)
    _nonneg_int(gt["samples"], "output.ground_truth.samples")
    gt.setdefault("seed", 1_000_003)
    gt.setdefault("proposal_scale", 0.1)
    _positive_number(gt["proposal_scale"], "output.ground_truth.proposal_scale")
    gt.setdefault("burn_in", 10_000)
    _nonneg_int(gt["burn_in"], "output.ground_truth.burn_in")
    gt.setdefault("thinning", 10)
    _expect(gt["thinning"] >= 1, "output.ground_truth.thinning", "must be >= 1")
    output["ground_truth"] = gt
    output.setdefault("mmd", gt["samples"] > 0)
    _expect(isinstance(output["mmd"], bool), "output.mmd", "expected a boolean")
    _expect(not output["mmd"] or gt["samples"] > 0, "output.mmd",
            "requires output.ground_truth.samples > 0")
    output.setdefault("mmd_subsample_cap", 20_000)
    _expect(output["mmd_subsample_cap"] >= 1, "output.mmd_subsample_cap",
            "must be >= 1")
    output.setdefault("mmd_seed", 0)
    output.setdefault("binary_samples", False)
    out["output"] = output

    if ls == "median":
        _expect(gt["samples"] > 0, "kernel.lengthscale",
                '"median" requires output.ground_truth.samples > 0')
    return out


def resolve_method_defaults(config: dict, kind: str, total_dim: int) -> dict:
    """Fill dimension-dependent method defaults from the bundled table."""
    table = bundled_defaults(kind, total_dim)
    resolved = dict(config)
    methods = []
    for m in config["method"]:
        m = dict(m)
        name = m["name"]
        if name == "mp-svgd-dlr":
            m.setdefault("step", table["dlr"][0])
            m.setdefault("decay", table["dlr"][1])
        elif name == "mp-svgd-ag":
            m.setdefault("step", table["adagrad_step"])
        elif name in ("mp-svgd-static", "svgd"):
            m.setdefault("step", table["dlr"][0])
        elif name == "svn-ctr":
            m.setdefault("radius", table["svn_radius"])
        elif name == "tr-svi-kl":
            m.setdefault("nystrom_size", max(1, config["run"]["particles"] // 10))
        methods.append(m)
    resolved["method"] = methods
    return resolved
