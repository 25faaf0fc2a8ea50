"""Loaders and sampling utilities for the three benchmark datasets.

All three loaders parse the published UCI file formats into one uniform
in-memory form (:class:`GroupedDataset`) whose groups follow the fixed
training order used by the online learning protocol. Loading is a pure
function of the file contents, so repeated loads of the same files yield
identical datasets.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Sample",
    "GroupedDataset",
    "ShotPlan",
    "DatasetError",
    "ParseError",
    "RejectedRecordError",
    "SchemaError",
    "load_gas_drift",
    "load_forest",
    "load_anuran",
    "split_validation",
    "draw_shots",
    "feature_matrix",
    "GAS_GROUP_ORDER",
    "FOREST_GROUP_ORDER",
    "ANURAN_GROUP_ORDER",
]


class DatasetError(Exception):
    """Base error for dataset ingestion problems."""


class ParseError(DatasetError):
    """A line or cell could not be parsed; message carries its position."""


class RejectedRecordError(DatasetError):
    """A structurally valid record carries an unusable label or arity."""


class SchemaError(DatasetError):
    """A required column or header is missing."""


# Gas identifiers used in the UCI drift archive files, and the fixed
# training order of the six odorant groups.
GAS_CLASS_NAMES = {
    1: "ethanol",
    2: "ethylene",
    3: "ammonia",
    4: "acetaldehyde",
    5: "acetone",
    6: "toluene",
}
GAS_GROUP_ORDER = ("ammonia", "acetaldehyde", "acetone", "ethylene", "ethanol", "toluene")
GAS_RAW_DIMENSION = 128
# One steady-state response magnitude per sensor: the first feature of each
# sensor's 8-feature block (0-based indices 0, 8, ..., 120).
GAS_PEAK_FEATURES = tuple(range(0, GAS_RAW_DIMENSION, 8))
GAS_BATCHES = (1, 7)

FOREST_CLASS_NAMES = {"s": "Sugi", "h": "Hinoki", "d": "Mixed deciduous", "o": "Other"}
FOREST_GROUP_ORDER = ("Sugi", "Hinoki", "Mixed deciduous", "Other")
FOREST_DIMENSION = 27
FOREST_FILES = ("training.csv", "testing.csv")

ANURAN_GROUP_ORDER = (
    "AdenomeraAndre",
    "AdenomeraHylaedactylus",
    "Ameeregatrivittata",
    "HylaMinuta",
    "HypsiboasCinerascens",
    "HypsiboasCordobae",
    "LeptodactylusFuscus",
    "OsteocephalusOophagus",
    "Rhinellagranulosa",
    "ScinaxRuber",
)
ANURAN_DIMENSION = 22
ANURAN_FILE = "Frogs_MFCCs.csv"


@dataclass(frozen=True, eq=False)
class Sample:
    """One sensor/feature reading with its class label."""

    features: np.ndarray
    class_id: int
    aux_labels: Mapping[str, str] | None = None
    intensity_tag: float | None = None


@dataclass
class GroupedDataset:
    """A dataset split into class groups in fixed training order."""

    dimension: int
    groups: list[tuple[int, list[Sample]]]
    validation: list[Sample] = field(default_factory=list)
    class_names: tuple[str, ...] = ()
    hierarchy: dict[str, tuple[str, str]] | None = None

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def group(self, group_id: int) -> list[Sample]:
        for gid, samples in self.groups:
            if gid == group_id:
                return samples
        raise KeyError(f"no group {group_id}")

    def total_samples(self) -> int:
        return len(self.validation) + sum(len(s) for _, s in self.groups)


@dataclass(frozen=True)
class ShotPlan:
    """Seeded selection of k training samples per group."""

    shots_per_group: int
    seed: int
    selected: dict[int, tuple[int, ...]]

    def shots(self, ds: GroupedDataset, group_id: int) -> list[Sample]:
        samples = ds.group(group_id)
        return [samples[i] for i in self.selected[group_id]]

    def test_pool(self, ds: GroupedDataset, group_id: int) -> list[Sample]:
        samples = ds.group(group_id)
        chosen = set(self.selected[group_id])
        return [s for i, s in enumerate(samples) if i not in chosen]


def feature_matrix(samples: Sequence[Sample]) -> np.ndarray:
    """Stack sample feature vectors into an (n_samples, D) array."""
    if not samples:
        raise ValueError("no samples")
    return np.stack([s.features for s in samples]).astype(np.float64)


def _group_by_class(samples: list[Sample], class_names: Sequence[str]) -> list[tuple[int, list[Sample]]]:
    buckets: dict[int, list[Sample]] = {gid: [] for gid in range(len(class_names))}
    for s in samples:
        buckets[s.class_id].append(s)
    return [(gid, buckets[gid]) for gid in range(len(class_names))]


def load_gas_drift(path, batch: int, feature_indices: Sequence[int] | None = None) -> GroupedDataset:
    """Load one batch of the chemosensor drift archive.

    ``path`` may be the batch file itself or a directory containing
    ``batch<N>.dat``. Each line reads ``<gas>;<concentration> 1:<v> ... 128:<v>``.
    Only the peak response of each of the 16 sensors is kept (the first
    feature of each sensor's 8-feature block unless ``feature_indices``
    overrides the selection). Negative values are clipped to zero.
    """
    if batch not in GAS_BATCHES:
        raise ValueError(f"unsupported batch {batch}; supported: {GAS_BATCHES}")
    p = Path(path)
    if p.is_dir():
        p = p / f"batch{batch}.dat"
    if not p.is_file():
        raise DatasetError(f"gas drift file not found: {p}")
    indices = GAS_PEAK_FEATURES if feature_indices is None else tuple(int(i) for i in feature_indices)
    if any(i < 0 or i >= GAS_RAW_DIMENSION for i in indices):
        raise ValueError(f"feature indices must lie in [0, {GAS_RAW_DIMENSION})")

    name_to_gid = {name: gid for gid, name in enumerate(GAS_GROUP_ORDER)}
    samples: list[Sample] = []
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            head, _, tail = line.partition(" ")
            if ";" not in head:
                raise ParseError(f"{p.name}:{lineno}: expected '<gas>;<concentration>' label")
            gas_str, _, conc_str = head.partition(";")
            try:
                gas_id = int(float(gas_str))
                concentration = float(conc_str)
            except ValueError as exc:
                raise ParseError(f"{p.name}:{lineno}: bad label field {head!r}") from exc
            if gas_id not in GAS_CLASS_NAMES:
                raise RejectedRecordError(f"{p.name}:{lineno}: unknown gas id {gas_id}")
            raw = np.zeros(GAS_RAW_DIMENSION)
            for token in tail.split():
                key, _, value = token.partition(":")
                try:
                    k = int(key)
                    v = float(value)
                except ValueError as exc:
                    raise ParseError(f"{p.name}:{lineno}: bad feature token {token!r}") from exc
                if not 1 <= k <= GAS_RAW_DIMENSION:
                    raise RejectedRecordError(f"{p.name}:{lineno}: feature index {k} out of range")
                raw[k - 1] = v
            features = np.clip(raw[list(indices)], 0.0, None)
            samples.append(Sample(
                features=features,
                class_id=name_to_gid[GAS_CLASS_NAMES[gas_id]],
                intensity_tag=concentration,
            ))
    if not samples:
        raise DatasetError(f"no samples in {p}")
    return GroupedDataset(
        dimension=len(indices),
        groups=_group_by_class(samples, GAS_GROUP_ORDER),
        class_names=GAS_GROUP_ORDER,
    )


def load_forest(path, validation_fraction: float = 0.1, seed: int = 0) -> GroupedDataset:
    """Load the forest-type spectral dataset (train + test CSVs pooled).

    The returned dataset already carries its validation split: feature
    minima are estimated from that split, subtracted from every sample,
    and any remaining negatives clipped to zero, so the correction is a
    function of the validation draw.
    """
    p = Path(path)
    files = [p] if p.is_file() else [p / name for name in FOREST_FILES]
    missing = [f for f in files if not f.is_file()]
    if missing:
        raise DatasetError(f"forest CSV not found: {missing[0]}")

    letter_to_gid = {letter: FOREST_GROUP_ORDER.index(name) for letter, name in FOREST_CLASS_NAMES.items()}
    rows: list[tuple[int, np.ndarray]] = []
    for f in files:
        with f.open("r", encoding="utf-8") as fh:
            for lineno, record in enumerate(csv.reader(fh), start=1):
                if not record or (lineno == 1 and record[0].strip().lower() == "class"):
                    continue
                if len(record) != FOREST_DIMENSION + 1:
                    raise RejectedRecordError(
                        f"{f.name}:{lineno}: expected {FOREST_DIMENSION + 1} columns, got {len(record)}")
                label = record[0].strip().lower()
                if label not in letter_to_gid:
                    raise RejectedRecordError(f"{f.name}:{lineno}: unknown class {record[0]!r}")
                try:
                    values = np.array([float(c) for c in record[1:]])
                except ValueError as exc:
                    raise ParseError(f"{f.name}:{lineno}: non-numeric cell") from exc
                rows.append((letter_to_gid[label], values))
    if not rows:
        raise DatasetError(f"no samples under {p}")

    val_idx = _stratified_indices([gid for gid, _ in rows], validation_fraction, seed,
                                  n_classes=len(FOREST_GROUP_ORDER))
    val_set = set(val_idx)
    minima = np.min(np.stack([rows[i][1] for i in val_idx]), axis=0)

    def corrected(values: np.ndarray) -> np.ndarray:
        return np.clip(values - minima, 0.0, None)

    validation = [Sample(features=corrected(rows[i][1]), class_id=rows[i][0]) for i in val_idx]
    train = [Sample(features=corrected(v), class_id=gid)
             for i, (gid, v) in enumerate(rows) if i not in val_set]
    return GroupedDataset(
        dimension=FOREST_DIMENSION,
        groups=_group_by_class(train, FOREST_GROUP_ORDER),
        validation=validation,
        class_names=FOREST_GROUP_ORDER,
    )


def load_anuran(path) -> GroupedDataset:
    """Load the anuran call MFCC dataset with its genus/family hierarchy.

    MFCC values are shifted by +1 into [0, 2]. Values outside [-1, 1]
    before the shift trigger a warning and are clipped to the bounds.
    """
    p = Path(path)
    if p.is_dir():
        p = p / ANURAN_FILE
    if not p.is_file():
        raise DatasetError(f"anuran CSV not found: {p}")

    name_to_gid = {name: gid for gid, name in enumerate(ANURAN_GROUP_ORDER)}
    samples: list[Sample] = []
    hierarchy: dict[str, tuple[str, str]] = {}
    clipped = 0
    with p.open("r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("Family", "Genus", "Species"):
            if col not in fields:
                raise SchemaError(f"{p.name}: missing required column {col!r}")
        mfcc_cols = fields[:fields.index("Family")]
        if len(mfcc_cols) != ANURAN_DIMENSION:
            raise SchemaError(
                f"{p.name}: expected {ANURAN_DIMENSION} feature columns before 'Family', got {len(mfcc_cols)}")
        for lineno, row in enumerate(reader, start=2):
            species = row["Species"].strip()
            if species not in name_to_gid:
                raise RejectedRecordError(f"{p.name}:{lineno}: unknown species {species!r}")
            genus, family = row["Genus"].strip(), row["Family"].strip()
            known = hierarchy.get(species)
            if known is not None and known != (genus, family):
                raise SchemaError(f"{p.name}:{lineno}: species {species} maps to conflicting taxa")
            hierarchy[species] = (genus, family)
            try:
                values = np.array([float(row[c]) for c in mfcc_cols])
            except ValueError as exc:
                raise ParseError(f"{p.name}:{lineno}: non-numeric MFCC cell") from exc
            out_of_range = (values < -1.0) | (values > 1.0)
            if out_of_range.any():
                clipped += int(out_of_range.sum())
                values = np.clip(values, -1.0, 1.0)
            samples.append(Sample(
                features=values + 1.0,
                class_id=name_to_gid[species],
                aux_labels={"genus": genus, "family": family},
            ))
    if not samples:
        raise DatasetError(f"no samples in {p}")
    if clipped:
        warnings.warn(f"{p.name}: clipped {clipped} MFCC values outside [-1, 1]", stacklevel=2)
    return GroupedDataset(
        dimension=ANURAN_DIMENSION,
        groups=_group_by_class(samples, ANURAN_GROUP_ORDER),
        class_names=ANURAN_GROUP_ORDER,
        hierarchy=hierarchy,
    )


def _stratified_indices(class_ids: Sequence[int], fraction: float, seed: int,
                        n_classes: int) -> list[int]:
    """Pick a stratified holdout: about ``fraction`` of each class, at least one."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    per_class: dict[int, list[int]] = {gid: [] for gid in range(n_classes)}
    for i, gid in enumerate(class_ids):
        per_class[gid].append(i)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for gid in range(n_classes):
        pool = per_class[gid]
        n = max(1, round(fraction * len(pool)))
        if n >= len(pool):
            raise DatasetError(f"validation fraction {fraction} leaves group {gid} empty")
        picks = rng.choice(len(pool), size=n, replace=False)
        chosen.extend(pool[i] for i in sorted(picks))
    return chosen


def split_validation(ds: GroupedDataset, fraction: float, seed: int) -> GroupedDataset:
    """Move a stratified random holdout of each group into the validation set."""
    if ds.validation:
        raise DatasetError("dataset already has a validation split")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    new_groups: list[tuple[int, list[Sample]]] = []
    validation: list[Sample] = []
    for gid, samples in ds.groups:
        n = max(1, round(fraction * len(samples)))
        if n >= len(samples):
            raise DatasetError(f"fraction {fraction} leaves group {gid} empty")
        picks = set(int(i) for i in rng.choice(len(samples), size=n, replace=False))
        validation.extend(s for i, s in enumerate(samples) if i in picks)
        new_groups.append((gid, [s for i, s in enumerate(samples) if i not in picks]))
    return replace(ds, groups=new_groups, validation=validation)


def draw_shots(ds: GroupedDataset, k: int, seed: int) -> ShotPlan:
    """Draw k training samples per group, uniformly without replacement."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    selected: dict[int, tuple[int, ...]] = {}
    for gid, samples in ds.groups:
        if k > len(samples):
            name = ds.class_names[gid] if gid < len(ds.class_names) else str(gid)
            raise DatasetError(f"group '{name}' has {len(samples)} samples, cannot draw {k} shots")
        picks = rng.choice(len(samples), size=k, replace=False)
        selected[gid] = tuple(int(i) for i in sorted(picks))
    return ShotPlan(shots_per_group=k, seed=seed, selected=selected)
