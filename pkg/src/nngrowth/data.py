"""Growth-curve datasets, validation, delimited-file I/O and input scaling.

Densities are kept in whatever units the caller supplies. The Gompertz
parameterization is conventionally applied to log10 counts, but nothing
here depends on that choice.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ENV_FIELDS = ("temperature", "ph", "nacl")
CSV_COLUMNS = ("curve_id", "group_id", "time_index", "density", "temperature", "ph", "nacl")


class DataError(ValueError):
    """Raised when an input file or dataset cannot be used."""


@dataclass(frozen=True)
class EnvCondition:
    """One environmental setting; defines a group."""

    temperature: float
    ph: float
    nacl: float

    def as_array(self) -> np.ndarray:
        return np.array([self.temperature, self.ph, self.nacl], dtype=float)


@dataclass(frozen=True)
class GrowthCurve:
    """A single replication: equally spaced densities starting at t = 0."""

    curve_id: str
    group_index: int
    densities: np.ndarray
    time_step: float = 1.0

    def __post_init__(self):
        arr = np.array(self.densities, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "densities", arr)

    @property
    def n_obs(self) -> int:
        return len(self.densities)

    @property
    def initial_density(self) -> float:
        return float(self.densities[0])


@dataclass(frozen=True)
class GrowthDataset:
    groups: tuple[EnvCondition, ...]
    curves: tuple[GrowthCurve, ...]
    group_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "curves", tuple(self.curves))
        if self.group_labels is not None:
            object.__setattr__(self, "group_labels", tuple(self.group_labels))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_curves(self) -> int:
        return len(self.curves)

    def curves_in_group(self, j: int) -> list[GrowthCurve]:
        return [c for c in self.curves if c.group_index == j]

    def curve(self, curve_id: str) -> GrowthCurve:
        for c in self.curves:
            if c.curve_id == curve_id:
                return c
        raise KeyError(curve_id)

    def curve_position(self, curve_id: str) -> int:
        for i, c in enumerate(self.curves):
            if c.curve_id == curve_id:
                return i
        raise KeyError(curve_id)

    def label(self, j: int) -> str:
        if self.group_labels is not None:
            return self.group_labels[j]
        return str(j)


@dataclass(frozen=True)
class ScalingSpec:
    """Per-dimension affine map of (T, pH, NaCl) onto [target_lo, target_hi]."""

    observed_min: tuple[float, float, float]
    observed_max: tuple[float, float, float]
    target_lo: float = 0.1
    target_hi: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "observed_min", tuple(float(v) for v in self.observed_min))
        object.__setattr__(self, "observed_max", tuple(float(v) for v in self.observed_max))

    def to_dict(self) -> dict:
        return {
            "observed_min": list(self.observed_min),
            "observed_max": list(self.observed_max),
            "target_lo": self.target_lo,
            "target_hi": self.target_hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingSpec":
        return cls(tuple(d["observed_min"]), tuple(d["observed_max"]),
                   d.get("target_lo", 0.1), d.get("target_hi", 0.9))


def scale_inputs(env: EnvCondition, spec: ScalingSpec) -> np.ndarray:
    """Map an environment onto the scaled input domain used by the networks.

    Values outside the observed range are extrapolated affinely and a
    warning is emitted.
    """
    x = env.as_array()
    lo = np.asarray(spec.observed_min)
    hi = np.asarray(spec.observed_max)
    for name, a, b in zip(ENV_FIELDS, lo, hi):
        if not a < b:
            raise DataError(f"degenerate scaling for dimension {name!r} (min == max == {a})")
    if np.any(x < lo) or np.any(x > hi):
        warnings.warn(f"environment {env} lies outside the observed scaling range; "
                      "extrapolating affinely", stacklevel=2)
    frac = (x - lo) / (hi - lo)
    # two-sided form hits both target endpoints exactly
    return spec.target_lo * (1.0 - frac) + spec.target_hi * frac


def unscale_inputs(scaled: Sequence[float], spec: ScalingSpec) -> EnvCondition:
    s = np.asarray(scaled, dtype=float)
    lo = np.asarray(spec.observed_min)
    hi = np.asarray(spec.observed_max)
    x = lo + (s - spec.target_lo) * (hi - lo) / (spec.target_hi - spec.target_lo)
    return EnvCondition(*map(float, x))


def build_scaling(dataset: GrowthDataset) -> ScalingSpec:
    if not dataset.groups:
        raise DataError("dataset has no groups")
    envs = np.array([g.as_array() for g in dataset.groups])
    lo, hi = envs.min(axis=0), envs.max(axis=0)
    for name, a, b in zip(ENV_FIELDS, lo, hi):
        if a == b:
            raise DataError(f"constant dimension {name!r} across all groups; cannot scale")
    return ScalingSpec(tuple(lo), tuple(hi))


def scaled_group_inputs(dataset: GrowthDataset, spec: ScalingSpec) -> np.ndarray:
    """(J, 3) array of scaled environments, one row per group."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return np.array([scale_inputs(g, spec) for g in dataset.groups])


def validate_dataset(dataset: GrowthDataset) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    problems = []
    n_groups = len(dataset.groups)
    if n_groups < 1:
        problems.append("dataset has no groups (J must be >= 1)")
    seen_env = {}
    for j, g in enumerate(dataset.groups):
        vals = (g.temperature, g.ph, g.nacl)
        if not all(math.isfinite(v) for v in vals):
            problems.append(f"group {j}: non-finite environment {vals}")
        if vals in seen_env:
            problems.append(f"group {j}: environment {vals} duplicates group {seen_env[vals]}")
        else:
            seen_env[vals] = j
    counts = [0] * n_groups
    ids = set()
    for c in dataset.curves:
        if c.curve_id in ids:
            problems.append(f"curve {c.curve_id}: duplicate curve id")
        ids.add(c.curve_id)
        if not 0 <= c.group_index < n_groups:
            problems.append(f"curve {c.curve_id}: group_index {c.group_index} out of range [0, {n_groups})")
        else:
            counts[c.group_index] += 1
        if c.n_obs < 2:
            problems.append(f"curve {c.curve_id}: {c.n_obs} observation(s), need at least 2")
        if not np.all(np.isfinite(c.densities)):
            problems.append(f"curve {c.curve_id}: non-finite density")
        if not (math.isfinite(c.time_step) and c.time_step > 0):
            problems.append(f"curve {c.curve_id}: time_step must be > 0, got {c.time_step}")
    for j, n in enumerate(counts):
        if n == 0:
            problems.append(f"group {j}: no curves")
    return problems


def read_dataset(path: str | Path, time_step: float = 1.0) -> GrowthDataset:
    """Parse the comma-separated ingestion format.

    Groups are formed from identical (temperature, ph, nacl) triples in
    order of first appearance; ``group_id`` is only checked for consistency.
    """
    path = Path(path)
    rows = {}
    order = []
    env_of_curve = {}
    group_of_curve = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                cid = row["curve_id"]
                t = int(row["time_index"])
                y = float(row["density"])
                env = (float(row["temperature"]), float(row["ph"]), float(row["nacl"]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if cid not in rows:
                rows[cid] = []
                order.append(cid)
                env_of_curve[cid] = env
                group_of_curve[cid] = row["group_id"]
            elif env_of_curve[cid] != env:
                raise DataError(f"{path}:{lineno}: curve {cid} changes environment")
            rows[cid].append((t, y))

    env_index = {}
    label_env = {}
    groups, labels = [], []
    curves = []
    for cid in order:
        env, label = env_of_curve[cid], group_of_curve[cid]
        if label in label_env and label_env[label] != env:
            raise DataError(f"group_id {label!r} used for different environments "
                            f"{label_env[label]} and {env}")
        label_env[label] = env
        if env not in env_index:
            env_index[env] = len(groups)
            groups.append(EnvCondition(*env))
            labels.append(label)
        pts = sorted(rows[cid])
        times = [t for t, _ in pts]
        if times != list(range(len(times))):
            raise DataError(f"curve {cid}: time_index must be consecutive integers from 0, got {times}")
        curves.append(GrowthCurve(cid, env_index[env], np.array([y for _, y in pts]), time_step))
    return GrowthDataset(tuple(groups), tuple(curves), tuple(labels))


def write_dataset(dataset: GrowthDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in dataset.curves:
            g = dataset.groups[c.group_index]
            for t, y in enumerate(c.densities):
                w.writerow([c.curve_id, dataset.label(c.group_index), t, repr(float(y)),
                            repr(g.temperature), repr(g.ph), repr(g.nacl)])


@dataclass
class ObservationTable:
    """Flat, model-ready view of a dataset.

    All observations are concatenated curve by curve. ``prev`` holds the
    previously observed density (NaN at t = 0).
    """

    y: np.ndarray
    time: np.ndarray
    curve: np.ndarray
    group: np.ndarray
    prev: np.ndarray
    n_curves: int
    n_groups: int
    curve_group: np.ndarray
    env_scaled: np.ndarray | None = None
    # transition view (t >= 1) sorted by group, for the recursive model
    trans_index: np.ndarray = field(default=None)
    trans_group_starts: np.ndarray = field(default=None)

    @classmethod
    def from_dataset(cls, dataset: GrowthDataset, scaling: ScalingSpec | None = None) -> "ObservationTable":
        ys, ts, cs, gs, ps = [], [], [], [], []
        for i, c in enumerate(dataset.curves):
            n = c.n_obs
            ys.append(c.densities)
            ts.append(np.arange(n, dtype=float))
            cs.append(np.full(n, i))
            gs.append(np.full(n, c.group_index))
            ps.append(np.concatenate([[np.nan], c.densities[:-1]]))
        cat = (lambda parts, dt: np.concatenate(parts).astype(dt)) if ys else (lambda parts, dt: np.zeros(0, dt))
        y, time = cat(ys, float), cat(ts, float)
        curve, group, prev = cat(cs, int), cat(gs, int), cat(ps, float)
        trans = np.flatnonzero(time >= 1)
        trans = trans[np.argsort(group[trans], kind="stable")]
        starts = np.searchsorted(group[trans], np.arange(dataset.n_groups))
        env = scaled_group_inputs(dataset, scaling) if scaling is not None else None
        return cls(y, time, curve, group, prev, dataset.n_curves, dataset.n_groups,
                   np.array([c.group_index for c in dataset.curves], dtype=int), env,
                   trans, starts)
