"""Dataset directory ingestion and feature-table round-tripping.

Layout: <dir>/subject_<id>/trial_<id>.csv holds one header row naming the
eight channels followed by baseline rows then signal rows (3 s + 60 s at
128 Hz, 8064 rows total, unless a meta.json at the dataset root declares
other dimensions); trial_<id>.labels.csv holds the three ratings. Floats
are written with shortest round-trip formatting so identical inputs yield
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .entropy import FEATURE_NAMES, FeatureVector
from .errors import IngestionError
from .evaluate import Dataset, DatasetRow
from .signals import CHANNEL_ORDER, RATING_NAMES, TimeSeries, Trial

DEFAULT_META = {"sample_rate_hz": 128.0, "baseline_samples": 384, "signal_samples": 7680}


def fmt(v) -> str:
    """Shortest round-trip decimal for floats; plain str otherwise."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_meta(root: Path) -> dict:
    meta_path = root / "meta.json"
    if not meta_path.exists():
        return dict(DEFAULT_META)
    try:
        doc = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{meta_path}: invalid JSON ({exc})") from exc
    meta = dict(DEFAULT_META)
    unknown = [k for k in doc if k not in meta]
    if unknown:
        raise IngestionError(f"{meta_path}: unknown keys {unknown}")
    meta.update(doc)
    if meta["baseline_samples"] < 1 or meta["signal_samples"] < 1 or meta["sample_rate_hz"] <= 0:
        raise IngestionError(f"{meta_path}: dimensions must be positive")
    return meta


def _read_labels(path: Path) -> dict[str, float]:
    if not path.exists():
        raise IngestionError(f"missing labels file {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if len(rows) != 2:
        raise IngestionError(f"{path}: expected a header and one data row, found {len(rows)} rows")
    header, data = rows
    if [h.strip() for h in header] != list(RATING_NAMES):
        raise IngestionError(f"{path}: header must be {','.join(RATING_NAMES)}")
    out = {}
    for name, cell in zip(RATING_NAMES, data):
        try:
            out[name] = float(cell)
        except ValueError as exc:
            raise IngestionError(f"{path}: column {name}: could not parse {cell!r}") from exc
    return out


def _read_signal_csv(path: Path, expected_rows: int) -> dict[str, np.ndarray]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        expected = [k.value for k in CHANNEL_ORDER]
        missing = [name for name in expected if name not in header]
        if missing:
            raise IngestionError(f"{path}: missing channel column(s) {missing}")
        extra = [name for name in header if name not in expected]
        if extra:
            raise IngestionError(f"{path}: unknown channel column(s) {extra}")
        rows = list(reader)
    if len(rows) != expected_rows:
        raise IngestionError(
            f"{path}: expected {expected_rows} data rows "
            f"(baseline + signal), found {len(rows)}"
        )
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError:
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: row {i + 2}: expected {len(header)} cells, found {len(row)}"
                ) from None
            for name, cell in zip(header, row):
                try:
                    float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {i + 2}, column {name}: could not parse {cell!r}"
                    ) from None
        raise IngestionError(f"{path}: malformed numeric data") from None
    if not np.all(np.isfinite(data)):
        i, j = np.argwhere(~np.isfinite(data))[0]
        raise IngestionError(f"{path}: row {i + 2}, column {header[j]}: non-finite value")
    return {name: data[:, header.index(name)] for name in (k.value for k in CHANNEL_ORDER)}


_SUBJECT_RE = re.compile(r"^subject_(\d+)$")
_TRIAL_RE = re.compile(r"^trial_(\d+)\.csv$")


def ingest_dataset(root) -> list[Trial]:
    """Read every subject_*/trial_*.csv under ``root``, validating shapes and
    cells; trials are ordered by (subject, trial)."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset directory {root} does not exist")
    meta = _load_meta(root)
    n_base = int(meta["baseline_samples"])
    n_sig = int(meta["signal_samples"])
    rate = float(meta["sample_rate_hz"])
    subjects = []
    for child in root.iterdir():
        m = _SUBJECT_RE.match(child.name)
        if child.is_dir() and m:
            subjects.append((int(m.group(1)), child))
    if not subjects:
        raise IngestionError(f"{root}: no subject_<id> directories found")
    trials: list[Trial] = []
    for subject_id, subject_dir in sorted(subjects):
        trial_files = []
        for child in subject_dir.iterdir():
            m = _TRIAL_RE.match(child.name)
            if m:
                trial_files.append((int(m.group(1)), child))
        if not trial_files:
            raise IngestionError(f"{subject_dir}: no trial_<id>.csv files found")
        for trial_id, path in sorted(trial_files):
            columns = _read_signal_csv(path, n_base + n_sig)
            labels_path = path.with_name(f"trial_{trial_id}.labels.csv")
            ratings = _read_labels(labels_path)
            for name, value in ratings.items():
                if not (1.0 <= value <= 9.0):
                    raise IngestionError(f"{labels_path}: {name}={value} outside [1, 9]")
            channels = {}
            baselines = {}
            for kind in CHANNEL_ORDER:
                col = columns[kind.value]
                baselines[kind] = TimeSeries(col[:n_base], rate)
                channels[kind] = TimeSeries(col[n_base:], rate)
            trials.append(
                Trial(
                    subject_id=subject_id,
                    trial_id=trial_id,
                    channels=channels,
                    baselines=baselines,
                    ratings=ratings,
                )
            )
    return trials


def write_dataset(trials: Sequence[Trial], root, sample_rate_hz: float | None = None) -> None:
    """Write trials in the ingestible directory layout plus meta.json."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    first = trials[0]
    n_base = len(next(iter(first.baselines.values())))
    n_sig = first.n_samples
    rate = sample_rate_hz or next(iter(first.channels.values())).sample_rate_hz
    meta = {"sample_rate_hz": rate, "baseline_samples": n_base, "signal_samples": n_sig}
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True))
    for trial in trials:
        subject_dir = root / f"subject_{trial.subject_id}"
        subject_dir.mkdir(exist_ok=True)
        path = subject_dir / f"trial_{trial.trial_id}.csv"
        cols = []
        for kind in CHANNEL_ORDER:
            full = np.concatenate([trial.baselines[kind].values, trial.channels[kind].values])
            cols.append(full)
        mat = np.column_stack(cols)
        with path.open("w", newline="") as fh:
            fh.write(",".join(k.value for k in CHANNEL_ORDER) + "\n")
            for row in mat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        labels_path = subject_dir / f"trial_{trial.trial_id}.labels.csv"
        with labels_path.open("w", newline="") as fh:
            fh.write(",".join(RATING_NAMES) + "\n")
            fh.write(",".join(repr(float(trial.ratings[n])) for n in RATING_NAMES) + "\n")


# --- feature tables ----------------------------------------------------------

_FEATURE_HEADER = ("subject", "trial") + RATING_NAMES + FEATURE_NAMES


def write_features_csv(dataset: Dataset, path) -> None:
    """Feature table: subject, trial, the three ratings, then the 51 features."""
    path = Path(path)
    rows = sorted(dataset.rows, key=lambda r: (r.subject_id, r.trial_id))
    with path.open("w", newline="") as fh:
        fh.write(",".join(_FEATURE_HEADER) + "\n")
        for r in rows:
            cells = [str(r.subject_id), str(r.trial_id)]
            cells += [repr(float(r.ratings[n])) for n in RATING_NAMES]
            cells += [repr(float(r.features[n])) for n in FEATURE_NAMES]
            fh.write(",".join(cells) + "\n")


def read_features_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"features file {path} does not exist")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != _FEATURE_HEADER:
            raise IngestionError(f"{path}: unexpected header; regenerate with `physioshap extract`")
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(_FEATURE_HEADER):
                raise IngestionError(
                    f"{path}: row {i + 2}: expected {len(_FEATURE_HEADER)} cells, found {len(row)}"
                )
            try:
                subject = int(row[0])
                trial = int(row[1])
                ratings = {n: float(v) for n, v in zip(RATING_NAMES, row[2:5])}
                feats = {n: float(v) for n, v in zip(FEATURE_NAMES, row[5:])}
            except ValueError as exc:
                raise IngestionError(f"{path}: row {i + 2}: {exc}") from exc
            rows.append(
                DatasetRow(
                    row_id=len(rows),
                    subject_id=subject,
                    trial_id=trial,
                    features=FeatureVector(feats),
                    ratings=ratings,
                )
            )
    return Dataset(rows)
