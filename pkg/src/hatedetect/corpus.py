"""Dataset ingestion, binary label collapsing, balanced combining, splits.

All randomness is driven by explicit seeds, and every function here is a
pure computation over its inputs, so repeated runs are reproducible.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

HATE = "hate"
NON_HATE = "nonhate"
BINARY_LABELS = (HATE, NON_HATE)

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class LabeledExample:
    """One text with its source label and, once collapsed, a binary label."""

    id: str
    text: str
    raw_label: str
    binary_label: str | None = None


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset lives and which columns carry text and label."""

    name: str
    path: str
    text_column: str
    label_column: str
    label_mapping: dict | None = None


@dataclass(frozen=True)
class ClassCounts:
    hate: int
    nonhate: int

    @property
    def total(self) -> int:
        return self.hate + self.nonhate

    def to_dict(self) -> dict:
        return {"hate": self.hate, "nonhate": self.nonhate, "total": self.total}


@dataclass(frozen=True)
class SplitBundle:
    train: list
    validation: list
    test: list
    ratios: tuple
    seed: int
    stratified: bool

    def parts(self):
        return (self.train, self.validation, self.test)


def load_dataset(path, spec: DatasetSpec) -> list[LabeledExample]:
    """Read one CSV dataset into LabeledExamples.

    Ids are assigned deterministically from row order as "<name>:<row>".
    Rows whose text is empty after trimming are skipped; the skip count is
    logged.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    examples = []
    skipped = 0
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        for column in (spec.text_column, spec.label_column):
            if column not in fields:
                raise ValueError(f"dataset {path} is missing column {column!r} (has {fields})")
        for row_number, row in enumerate(reader):
            text = row.get(spec.text_column) or ""
            if not text.strip():
                skipped += 1
                continue
            raw_label = (row.get(spec.label_column) or "").strip()
            examples.append(
                LabeledExample(id=f"{spec.name}:{row_number}", text=text, raw_label=raw_label)
            )
    if skipped:
        log.info("skipped %d empty-text rows while loading %s", skipped, path)
    if not examples:
        raise ValueError(f"dataset {path} has zero usable rows")
    return examples


def read_label_mapping(path) -> dict:
    """Load a raw-label -> binary-label mapping from a JSON config file."""
    with open(path, encoding="utf-8") as handle:
        mapping = json.load(handle)
    if not isinstance(mapping, dict):
        raise ValueError(f"label mapping file {path} must hold a JSON object")
    return validate_mapping(mapping)


def validate_mapping(mapping: dict) -> dict:
    for raw, binary in mapping.items():
        if binary not in BINARY_LABELS:
            raise ValueError(
                f"label mapping sends {raw!r} to {binary!r}; expected one of {BINARY_LABELS}"
            )
    return dict(mapping)


def collapse_labels(examples, mapping: dict) -> tuple[list[LabeledExample], ClassCounts]:
    """Attach binary labels via the mapping; returns (examples, class counts).

    The mapping must cover every raw label that occurs; an unmapped label
    raises an error naming it.
    """
    validate_mapping(mapping)
    collapsed = []
    hate = nonhate = 0
    for example in examples:
        if example.raw_label not in mapping:
            raise ValueError(f"unmapped raw label {example.raw_label!r} (example {example.id})")
        binary = mapping[example.raw_label]
        if binary == HATE:
            hate += 1
        else:
            nonhate += 1
        collapsed.append(replace(example, binary_label=binary))
    return collapsed, ClassCounts(hate, nonhate)


def stats(dataset) -> ClassCounts:
    """Per-class counts of a collapsed dataset."""
    counter = Counter()
    for example in dataset:
        if example.binary_label is None:
            raise ValueError(f"example {example.id} has no binary label; collapse first")
        counter[example.binary_label] += 1
    return ClassCounts(counter[HATE], counter[NON_HATE])


def combine_balanced(datasets, seed: int, per_class_cap: int | None = None):
    """Merge collapsed datasets and subsample to exactly equal class counts.

    The per-class size is the minority-class count of the union (optionally
    capped by per_class_cap). Selection is without replacement from the
    seeded generator, independent of input ordering.
    """
    union = [example for dataset in datasets for example in dataset]
    if not union:
        raise ValueError("no examples to combine")
    ids = Counter(example.id for example in union)
    duplicates = [i for i, n in ids.items() if n > 1]
    if duplicates:
        raise ValueError(f"duplicate example ids across datasets: {duplicates[:5]}")
    by_class = {HATE: [], NON_HATE: []}
    for example in union:
        if example.binary_label is None:
            raise ValueError(f"example {example.id} has no binary label; collapse first")
        by_class[example.binary_label].append(example)
    for label in BINARY_LABELS:
        if not by_class[label]:
            raise ValueError(f"class {label!r} absent from the union")
        by_class[label].sort(key=lambda example: example.id)
    size = min(len(by_class[HATE]), len(by_class[NON_HATE]))
    if per_class_cap is not None:
        if per_class_cap < 1:
            raise ValueError(f"per_class_cap must be >= 1, got {per_class_cap}")
        size = min(size, per_class_cap)
    rng = np.random.default_rng(seed)
    selected = []
    for label in BINARY_LABELS:
        pool = by_class[label]
        picks = rng.permutation(len(pool))[:size]
        selected.extend(pool[i] for i in picks)
    order = rng.permutation(len(selected))
    return [selected[i] for i in order]


def _part_sizes(n: int, ratios) -> list[int]:
    # Cumulative rounding keeps each part within 1 of n * ratio and sums to n.
    boundaries = [int(np.floor(n * c + 0.5)) for c in np.cumsum(ratios)]
    boundaries[-1] = n
    sizes = []
    previous = 0
    for b in boundaries:
        sizes.append(b - previous)
        previous = b
    return sizes


def split(dataset, ratios=DEFAULT_RATIOS, seed: int = 0, stratified: bool = True) -> SplitBundle:
    """Partition a dataset into train/validation/test.

    With stratified=True each class is split by the same ratios, so class
    balance is stable across parts. Deterministic per seed.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")
    if len(dataset) < 3:
        raise ValueError(f"dataset too small to split: {len(dataset)} examples")
    if stratified:
        strata = {}
        for example in dataset:
            if example.binary_label is None:
                raise ValueError("stratified split requires collapsed labels")
            strata.setdefault(example.binary_label, []).append(example)
        groups = [strata[label] for label in BINARY_LABELS if label in strata]
    else:
        groups = [list(dataset)]
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for group in groups:
        group = sorted(group, key=lambda example: example.id)
        order = rng.permutation(len(group))
        sizes = _part_sizes(len(group), ratios)
        start = 0
        for part, size in zip(parts, sizes):
            part.extend(group[i] for i in order[start : start + size])
            start += size
    shuffled = []
    for part in parts:
        order = rng.permutation(len(part))
        shuffled.append([part[i] for i in order])
    return SplitBundle(*shuffled, ratios=ratios, seed=seed, stratified=stratified)


def write_split_manifests(bundle: SplitBundle, directory) -> None:
    """Write train/validation/test CSVs plus a JSON sidecar with seed/ratios."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, bundle.parts()):
        with open(directory / f"{name}.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["id", "text", "raw_label", "binary_label"])
            for example in part:
                writer.writerow(
                    [example.id, example.text, example.raw_label, example.binary_label or ""]
                )
    sidecar = {
        "seed": bundle.seed,
        "ratios": list(bundle.ratios),
        "stratified": bundle.stratified,
        "counts": {
            name: stats(part).to_dict() for name, part in zip(SPLIT_NAMES, bundle.parts())
        },
    }
    with open(directory / "split.json", "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=2)
        handle.write("\n")


def load_split_manifests(directory) -> SplitBundle:
    """Rebuild a SplitBundle from manifests written by write_split_manifests."""
    directory = Path(directory)
    sidecar_path = directory / "split.json"
    if not sidecar_path.exists():
        raise FileNotFoundError(f"split sidecar not found: {sidecar_path}")
    with open(sidecar_path, encoding="utf-8") as handle:
        sidecar = json.load(handle)
    parts = []
    for name in SPLIT_NAMES:
        path = directory / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"split manifest not found: {path}")
        part = []
        with open(path, newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                part.append(
                    LabeledExample(
                        id=row["id"],
                        text=row["text"],
                        raw_label=row["raw_label"],
                        binary_label=row["binary_label"] or None,
                    )
                )
        parts.append(part)
    return SplitBundle(
        *parts,
        ratios=tuple(sidecar["ratios"]),
        seed=sidecar["seed"],
        stratified=sidecar["stratified"],
    )
