"""Reading and writing datasets, models, banks and result tables.

Floats are written with ``repr`` (shortest round-trip form), so every file
reads back bit for bit.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyInput, RaggedCsv
from .estimation import ModelEstimate
from .lds_core import LdsModel
from .simulate import SUBSETS, MixedDataset, Trajectory


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def write_models(path, models) -> None:
    dump_json([m.to_dict() for m in models], path)


def read_models(path) -> list:
    obj = load_json(path)
    if isinstance(obj, dict) and "models" in obj:
        obj = obj["models"]
    if isinstance(obj, dict):
        obj = [obj]
    return [LdsModel.from_dict(o) for o in obj]


def read_estimates(path) -> list:
    return [ModelEstimate.from_dict(o) for o in load_json(path)]


def write_dataset(path, dataset: MixedDataset) -> None:
    with open(path, "w") as fh:
        for tr in dataset.all_trajectories():
            rec = {"index": tr.index, "subset": tr.subset,
                   "label": None if tr.label is None else int(tr.label),
                   "states": tr.states.tolist()}
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> MixedDataset:
    sets = {name: [] for name in SUBSETS}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            subset = rec.get("subset")
            if subset not in sets:
                raise ValueError(f"line {lineno}: unknown subset {subset!r}")
            sets[subset].append(Trajectory(np.asarray(rec["states"], dtype=float), rec.get("label"),
                                           int(rec["index"]), subset))
    dims = {tr.dim for group in sets.values() for tr in group}
    if len(dims) > 1:
        raise DimensionMismatch(f"dataset mixes state dimensions {sorted(dims)}")
    for group in sets.values():
        group.sort(key=lambda tr: tr.index)
    return MixedDataset(sets["subspace"], sets["clustering"], sets["classification"])


def write_trajectory_csv(path, traj: Trajectory, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{i}" for i in range(traj.dim)])
        for row in traj.states:
            writer.writerow([repr(float(v)) for v in row])


def read_csv_trajectories(directory, header: bool = False, subset: str = "clustering") -> list:
    """One trajectory per ``*.csv`` file, files taken in name order."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise EmptyInput(f"no CSV files in {directory}")
    out = []
    dim = None
    for idx, path in enumerate(files):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if header:
            rows = rows[1:]
        if not rows:
            raise EmptyInput(f"{path} has no data rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise RaggedCsv(f"{path} has rows of differing widths {sorted(widths)}")
        width = widths.pop()
        if dim is None:
            dim = width
        elif width != dim:
            raise DimensionMismatch(f"{path} has {width} columns, expected {dim}")
        try:
            states = np.array(rows, dtype=float)
        except ValueError as exc:
            raise RaggedCsv(f"{path}: non-numeric entry ({exc}); use the header flag for a header row") from exc
        out.append(Trajectory(states, None, idx, subset))
    return out


def write_matrix_csv(path, mat) -> None:
    mat = np.asarray(mat)
    fmt = (lambda v: str(int(v))) if mat.dtype.kind in "iub" else (lambda v: repr(float(v)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in mat:
            writer.writerow([fmt(v) for v in row])


def write_statistics_csv(path, table) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m", "n", "median_gamma", "median_y"])
        m = table.size
        for a in range(m):
            for b in range(a + 1, m):
                writer.writerow([a, b, repr(float(table.median_gamma[a, b])), repr(float(table.median_y[a, b]))])


def write_losses_csv(path, table) -> None:
    k = table.losses.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["m"] + [f"loss_{j}" for j in range(k)] + ["argmin"])
        for m, (row, best) in enumerate(zip(table.losses, table.argmin)):
            writer.writerow([m] + [repr(float(v)) for v in row] + [int(best)])


def write_assignment_csv(path, indices, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "label"])
        for idx, lab in zip(indices, labels):
            writer.writerow([int(idx), int(lab)])


def read_assignment_csv(path) -> dict:
    with open(path, newline="") as fh:
        return {int(r["index"]): int(r["label"]) for r in csv.DictReader(fh)}
