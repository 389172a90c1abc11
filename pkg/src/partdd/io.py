"""Instance files, oracle caches and run manifests (JSON)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .blockspace import BlockLayout
from .graph import Graph
from .problem import PartitionedProblem, PolyhedralConstraint, objective_from_dict

__all__ = [
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
    "problem_hash",
    "oracle_cache_path",
    "write_json",
    "read_json",
]

FORMAT = "partdd-instance"
FORMAT_VERSION = 1


def problem_to_dict(problem: PartitionedProblem) -> dict:
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "scenario": problem.scenario,
        "seed": problem.seed,
        "graph": problem.graph.to_dict(),
        "layout": problem.layout.to_dict(),
        "nodes": [
            {"objective": obj.to_dict(), "constraint": con.to_dict(), "sigma": obj.sigma}
            for obj, con in zip(problem.objectives, problem.constraints)
        ],
        "witness": problem.witness.tolist(),
        "meta": problem.meta,
    }


def problem_from_dict(d: dict) -> PartitionedProblem:
    if d.get("format") != FORMAT:
        raise ValueError("not a partdd instance file")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported instance format version {d.get('version')}")
    graph = Graph.from_dict(d["graph"])
    layout = BlockLayout.from_dict(d["layout"])
    objectives = [objective_from_dict(node["objective"]) for node in d["nodes"]]
    constraints = [PolyhedralConstraint.from_dict(node["constraint"]) for node in d["nodes"]]
    for i, (node, obj) in enumerate(zip(d["nodes"], objectives)):
        if node["sigma"] != obj.sigma:
            raise ValueError(f"node {i}: stored sigma differs from the objective's")
    return PartitionedProblem(graph, layout, objectives, constraints, np.asarray(d["witness"], dtype=float),
                              scenario=d.get("scenario", "custom"), seed=d.get("seed"),
                              meta=d.get("meta", {}))


def _canonical(d) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def problem_hash(problem: PartitionedProblem) -> str:
    return hashlib.sha256(_canonical(problem_to_dict(problem)).encode()).hexdigest()


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_problem(problem: PartitionedProblem, path):
    write_json(path, problem_to_dict(problem))


def load_problem(path) -> PartitionedProblem:
    return problem_from_dict(read_json(path))


def oracle_cache_path(instance_path) -> Path:
    p = Path(instance_path)
    return p.with_name(p.stem + ".oracle.json")


def software_version() -> str:
    return __version__
