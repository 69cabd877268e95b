"""On-disk formats for problem specs and sample matrices.

Problem specs are YAML trees with a schema_version field.  Samples go to CSV
(one row per draw, header = dimension names) or to a packed binary layout:
two little-endian int64 counts (rows, cols) followed by row-major
little-endian float64 values.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

from .bayesnet import BayesNetSpec, BayesNode
from .snlp import SnlpEdge, SnlpProblem

SCHEMA_VERSION = 1


def problem_to_dict(problem) -> dict:
    if isinstance(problem, BayesNetSpec):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "bayes_net",
            "layers": [
                [
                    {
                        "kind": node.kind,
                        "parents": list(node.parents),
                        "weights": [list(w) for w in node.weights],
                        "component_weights": list(node.component_weights),
                        "mean_offset": node.mean_offset,
                        "variance": node.variance,
                    }
                    for node in layer
                ]
                for layer in problem.layers
            ],
        }
    if isinstance(problem, SnlpProblem):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "snlp",
            "true_positions": problem.true_positions.tolist(),
            "anchor_positions": problem.anchor_positions.tolist(),
            "edges": [[e.i, e.j, e.measured] for e in problem.edges],
            "noise_variance": problem.noise_variance,
            "radius": problem.radius,
            "side": problem.side,
            "warnings": list(problem.warnings),
        }
    raise TypeError(f"cannot serialize problem of type {type(problem)!r}")


def problem_from_dict(data: dict):
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")
    kind = data.get("kind")
    if kind == "bayes_net":
        layers = tuple(
            tuple(
                BayesNode(
                    kind=node["kind"],
                    parents=tuple(node["parents"]),
                    weights=tuple(tuple(w) for w in node["weights"]),
                    component_weights=tuple(node["component_weights"]),
                    mean_offset=node["mean_offset"],
                    variance=node["variance"],
                )
                for node in layer
            )
            for layer in data["layers"]
        )
        return BayesNetSpec(layers=layers)
    if kind == "snlp":
        return SnlpProblem(
            true_positions=np.asarray(data["true_positions"], dtype=float),
            anchor_positions=np.asarray(data["anchor_positions"], dtype=float).reshape(-1, 2),
            edges=tuple(SnlpEdge(int(i), int(j), float(m)) for i, j, m in data["edges"]),
            noise_variance=float(data["noise_variance"]),
            radius=float(data["radius"]),
            side=float(data["side"]),
            warnings=tuple(data.get("warnings", [])),
        )
    raise ValueError(f"unknown problem kind {kind!r}")


def save_problem(path, problem) -> None:
    Path(path).write_text(
        yaml.safe_dump(problem_to_dict(problem), sort_keys=False)
    )


def load_problem(path):
    return problem_from_dict(yaml.safe_load(Path(path).read_text()))


def save_samples_csv(path, samples: np.ndarray, names: list[str]) -> None:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != len(names):
        raise ValueError("samples must be (rows, len(names))")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def load_samples_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return np.asarray(rows, dtype=float).reshape(len(rows), len(names)), names


def save_samples_binary(path, samples: np.ndarray) -> None:
    samples = np.ascontiguousarray(samples, dtype="<f8")
    with open(path, "wb") as fh:
        np.asarray(samples.shape, dtype="<i8").tofile(fh)
        samples.tofile(fh)


def load_samples_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        shape = np.fromfile(fh, dtype="<i8", count=2)
        data = np.fromfile(fh, dtype="<f8")
    rows, cols = int(shape[0]), int(shape[1])
    if data.size != rows * cols:
        raise ValueError("binary sample file is truncated")
    return data.reshape(rows, cols)
