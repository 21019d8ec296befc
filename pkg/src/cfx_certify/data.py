"""Tabular datasets: feature specs, CSV ingestion and the encoded [0, 1] feature space.

Continuous columns are min-max scaled, ordinal columns with values ``0..k``
become a prefix of ones of length ``k`` and discrete columns are one-hot
encoded.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

KINDS = ("continuous", "ordinal", "discrete")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    k: int | None = None
    categories: tuple | None = None
    min: float | None = None
    max: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DatasetError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "ordinal" and (self.k is None or self.k < 1):
            raise DatasetError(f"feature {self.name!r}: ordinal needs k >= 1")
        if self.kind == "discrete" and not self.categories:
            raise DatasetError(f"feature {self.name!r}: discrete needs categories")

    @property
    def width(self) -> int:
        if self.kind == "ordinal":
            return self.k
        if self.kind == "discrete":
            return len(self.categories)
        return 1

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "ordinal":
            d["k"] = self.k
        elif self.kind == "discrete":
            d["categories"] = list(self.categories)
        else:
            if self.min is not None:
                d["min"] = self.min
            if self.max is not None:
                d["max"] = self.max
        return d


@dataclass(frozen=True)
class FeatureSpec:
    features: tuple
    label: str = "label"
    classes: tuple | None = None

    @property
    def n_encoded(self) -> int:
        return sum(f.width for f in self.features)

    def slices(self) -> list[tuple[Feature, slice]]:
        out, start = [], 0
        for f in self.features:
            out.append((f, slice(start, start + f.width)))
            start += f.width
        return out

    def columns_of(self, names: Sequence[str]) -> list[int]:
        """Encoded column indices belonging to the named features."""
        lookup = {f.name: s for f, s in self.slices()}
        cols = []
        for name in names:
            if name not in lookup:
                raise DatasetError(f"unknown feature {name!r}")
            s = lookup[name]
            cols.extend(range(s.start, s.stop))
        return cols

    def encoded_names(self) -> list[str]:
        names = []
        for f in self.features:
            if f.kind == "continuous":
                names.append(f.name)
            elif f.kind == "ordinal":
                names.extend(f"{f.name}>={i + 1}" for i in range(f.k))
            else:
                names.extend(f"{f.name}={c}" for c in f.categories)
        return names

    def to_dict(self) -> dict:
        d = {"label": self.label, "features": [f.to_dict() for f in self.features]}
        if self.classes is not None:
            d["classes"] = list(self.classes)
        return d

    @classmethod
    def from_dict(cls, data) -> "FeatureSpec":
        if isinstance(data, list):
            data = {"features": data}
        if not isinstance(data, dict) or "features" not in data:
            raise DatasetError("feature spec must be a list of columns or an object with 'features'")
        feats = []
        for i, col in enumerate(data["features"]):
            if not isinstance(col, dict) or "name" not in col or "kind" not in col:
                raise DatasetError(f"features[{i}]: needs 'name' and 'kind'")
            cats = col.get("categories")
            feats.append(
                Feature(
                    name=str(col["name"]),
                    kind=col["kind"],
                    k=col.get("k"),
                    categories=tuple(str(c) for c in cats) if cats is not None else None,
                    min=col.get("min"),
                    max=col.get("max"),
                )
            )
        classes = data.get("classes")
        return cls(
            features=tuple(feats),
            label=data.get("label", "label"),
            classes=tuple(str(c) for c in classes) if classes is not None else None,
        )


def continuous_spec(n_features: int) -> FeatureSpec:
    return FeatureSpec(tuple(Feature(f"x{i}", "continuous", min=0.0, max=1.0) for i in range(n_features)))


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    spec: FeatureSpec = field(default=None)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            X = X.reshape(len(X), -1)
        y = np.array(self.y, dtype=int).ravel()
        if X.shape[0] != y.shape[0]:
            raise DatasetError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        spec = self.spec if self.spec is not None else continuous_spec(X.shape[1])
        if X.shape[0] and spec.n_encoded != X.shape[1]:
            raise DatasetError(f"spec encodes {spec.n_encoded} columns, data has {X.shape[1]}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "spec", spec)

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx].reshape(len(idx), self.X.shape[1]), self.y[idx], self.spec)


def encode_row(spec: FeatureSpec, values: dict, clip: bool = True) -> np.ndarray:
    out = np.zeros(spec.n_encoded)
    for f, s in spec.slices():
        raw = values[f.name]
        if f.kind == "continuous":
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise DatasetError(f"feature {f.name!r}: non-numeric value {raw!r}") from None
            span = f.max - f.min
            scaled = 0.0 if span == 0 else (v - f.min) / span
            out[s.start] = min(max(scaled, 0.0), 1.0) if clip else scaled
        elif f.kind == "ordinal":
            try:
                level = float(raw)
            except (TypeError, ValueError):
                raise DatasetError(f"feature {f.name!r}: non-numeric ordinal {raw!r}") from None
            if level != int(level) or not 0 <= level <= f.k:
                raise DatasetError(f"feature {f.name!r}: ordinal value {raw!r} outside 0..{f.k}")
            out[s.start:s.start + int(level)] = 1.0
        else:
            key = str(raw)
            if key not in f.categories:
                raise DatasetError(f"feature {f.name!r}: unknown category {raw!r}")
            out[s.start + f.categories.index(key)] = 1.0
    return out


def _is_missing(cell: str) -> bool:
    return cell.strip() == "" or cell.strip().lower() in ("nan", "na", "null", "none")


def read_csv_rows(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError(f"{path}: empty CSV")
        return list(reader.fieldnames), list(reader)


def fit_spec(spec: FeatureSpec, rows: list[dict]) -> FeatureSpec:
    """Fill in missing continuous min/max and class labels from the rows."""
    feats = []
    for f in spec.features:
        if f.kind == "continuous" and (f.min is None or f.max is None):
            try:
                vals = [float(r[f.name]) for r in rows]
            except ValueError as exc:
                raise DatasetError(f"feature {f.name!r}: {exc}") from None
            lo = f.min if f.min is not None else (min(vals) if vals else 0.0)
            hi = f.max if f.max is not None else (max(vals) if vals else 0.0)
            f = replace(f, min=float(lo), max=float(hi))
        feats.append(f)
    classes = spec.classes
    if classes is None:
        raw = sorted({r[spec.label] for r in rows}, key=_label_key)
        classes = tuple(raw)
    return replace(spec, features=tuple(feats), classes=classes)


def _label_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def load_spec(path) -> FeatureSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON: {exc}") from exc
    return FeatureSpec.from_dict(data)


def save_spec(spec: FeatureSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=1) + "\n")


def load_dataset(csv_path, spec_path=None, spec: FeatureSpec | None = None, clip: bool = True) -> Dataset:
    """Read a CSV with a header row and encode it according to a feature spec.

    Rows with a missing value in any used column are dropped. A fitted spec
    (min/max and class list filled in) is attached to the returned dataset so
    that a second file can be encoded on the same scale.
    """
    if spec is None:
        if spec_path is None:
            raise DatasetError("either spec_path or spec is required")
        spec = load_spec(spec_path)
    header, rows = read_csv_rows(csv_path)
    needed = [f.name for f in spec.features] + [spec.label]
    missing = [n for n in needed if n not in header]
    if missing:
        raise DatasetError(f"{csv_path}: columns {missing} not found in header")
    kept = [r for r in rows if not any(_is_missing(r[n] or "") for n in needed)]
    if len(kept) < len(rows):
        log.info("dropped %d rows with missing values", len(rows) - len(kept))
    spec = fit_spec(spec, kept)
    X = np.array([encode_row(spec, r, clip=clip) for r in kept]).reshape(len(kept), spec.n_encoded)
    labels = [r[spec.label] for r in kept]
    unknown = sorted(set(labels) - set(spec.classes))
    if unknown:
        raise DatasetError(f"unknown class labels {unknown}")
    y = np.array([spec.classes.index(v) for v in labels], dtype=int)
    return Dataset(X, y, spec)


def split_dataset(data: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Shuffle and cut into a leading ``fraction`` and the remainder."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    cut = int(math.floor(fraction * len(data)))
    return data.subset(order[:cut]), data.subset(order[cut:])


def make_synthetic(n_rows: int = 600, seed=0, shift: float = 0.0) -> tuple[list[dict], FeatureSpec]:
    """Heterogeneous two-class table: four continuous, one ordinal and one discrete column.

    ``shift`` moves the class-conditional means, which mimics a later data
    collection round.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n_rows)
    centers = np.array([[0.0, 0.0, 0.0, 0.0], [1.4, 1.0, -1.0, 0.6]]) + shift
    cont = centers[y] + rng.normal(0.0, 1.0, size=(n_rows, 4))
    level = np.clip(np.round(1.5 + 1.2 * y + rng.normal(0, 0.9, n_rows)), 0, 4).astype(int)
    probs = np.where(y[:, None] == 1, [0.2, 0.3, 0.5], [0.5, 0.3, 0.2])
    cat = np.array([rng.choice(["A", "B", "C"], p=p) for p in probs])
    rows = []
    for i in range(n_rows):
        row = {f"c{j}": f"{cont[i, j] * 10 + 50:.4f}" for j in range(4)}
        row["tier"] = str(level[i])
        row["region"] = cat[i]
        row["label"] = str(y[i])
        rows.append(row)
    spec = FeatureSpec(
        features=(
            Feature("c0", "continuous"),
            Feature("c1", "continuous"),
            Feature("c2", "continuous"),
            Feature("c3", "continuous"),
            Feature("tier", "ordinal", k=4),
            Feature("region", "discrete", categories=("A", "B", "C")),
        ),
        label="label",
    )
    return rows, spec


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
