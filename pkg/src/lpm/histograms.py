"""Ingestion of per-voxel ADC data into fixed-grid 2D histograms.

The histogram grid is (ADC bin x timepoint), with timepoint 0 = baseline and
timepoint 1 = follow-up. Bins are half-open [lo, hi); the last bin is closed
so adc_max itself still lands in-grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesignError, EmptyInputError, InputFormatError

COHORTS = ("control", "treated")
TIMEPOINTS = ("baseline", "followup")

# CSV files use the acquisition hour labels rather than the enum names.
_TIMEPOINT_LABELS = {"0": "baseline", "72": "followup",
                     "baseline": "baseline", "followup": "followup"}
_TIMEPOINT_HOURS = {"baseline": "0", "followup": "72"}


@dataclass(frozen=True)
class BinningConfig:
    """Uniform ADC bin grid over two timepoints (mm^2/s)."""

    adc_min: float = 0.0
    adc_max: float = 3.0e-3
    n_adc_bins: int = 32
    n_timepoints: int = 2

    def __post_init__(self):
        if not (self.adc_min < self.adc_max):
            raise ValueError(f"adc_min must be < adc_max, got [{self.adc_min}, {self.adc_max}]")
        if self.n_adc_bins < 2:
            raise ValueError(f"n_adc_bins must be >= 2, got {self.n_adc_bins}")
        if self.n_timepoints != 2:
            raise ValueError("exactly two timepoints are supported")

    @property
    def width(self) -> float:
        return (self.adc_max - self.adc_min) / self.n_adc_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.adc_min, self.adc_max, self.n_adc_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.adc_min + (np.arange(self.n_adc_bins) + 0.5) * self.width

    @property
    def n_cells(self) -> int:
        return self.n_adc_bins * self.n_timepoints

    def bin_index(self, adc: float):
        """Bin for an ADC value, or None when outside [adc_min, adc_max]."""
        if adc < self.adc_min or adc > self.adc_max:
            return None
        if adc == self.adc_max:  # closed last bin
            return self.n_adc_bins - 1
        return int((adc - self.adc_min) / self.width)

    def to_json_dict(self):
        return {"adc_min": self.adc_min, "adc_max": self.adc_max,
                "n_adc_bins": self.n_adc_bins}

    @classmethod
    def from_json_dict(cls, d) -> "BinningConfig":
        return cls(adc_min=d["adc_min"], adc_max=d["adc_max"],
                   n_adc_bins=d["n_adc_bins"])


@dataclass(frozen=True)
class VoxelRecord:
    tumor_id: str
    cohort: str
    timepoint: str
    adc: float

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise ValueError(f"unknown cohort {self.cohort!r}")
        if self.timepoint not in TIMEPOINTS:
            raise ValueError(f"unknown timepoint {self.timepoint!r}")
        if not (math.isfinite(self.adc) and self.adc > 0):
            raise ValueError(f"adc must be finite and > 0, got {self.adc}")


@dataclass(frozen=True)
class SignalRecord:
    """Diffusion-weighted signals for one voxel at several b-values."""

    b_values: tuple
    signals: tuple

    def __post_init__(self):
        if len(self.b_values) != len(self.signals):
            raise ValueError("b_values and signals must have the same length")
        if len(set(self.b_values)) < 2:
            raise DegenerateDesignError("need at least 2 distinct b-values")
        if any(b < 0 for b in self.b_values):
            raise ValueError("b-values must be non-negative")


@dataclass
class Histogram2D:
    """Binned (ADC x timepoint) frequency counts for one tumor."""

    tumor_id: str
    cohort: str
    counts: np.ndarray  # (n_adc_bins, 2) non-negative ints
    binning: BinningConfig
    overflow: int = 0
    warnings: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.binning.n_adc_bins, 2):
            raise ValueError(f"counts shape {counts.shape} does not match binning")
        if np.any(counts < 0) or not np.all(counts == np.floor(counts)):
            raise ValueError("counts must be non-negative integers")
        self.counts = counts.astype(np.int64)
        self.counts.setflags(write=False)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json_dict(self):
        return {
            "tumor_id": self.tumor_id,
            "cohort": self.cohort,
            "binning": self.binning.to_json_dict(),
            "counts": self.counts.tolist(),
            "overflow": int(self.overflow),
        }

    @classmethod
    def from_json_dict(cls, d) -> "Histogram2D":
        return cls(tumor_id=d["tumor_id"], cohort=d["cohort"],
                   counts=np.asarray(d["counts"], dtype=np.int64),
                   binning=BinningConfig.from_json_dict(d["binning"]),
                   overflow=int(d.get("overflow", 0)))


def fit_adc(record: SignalRecord) -> float:
    """ADC from a mono-exponential signal decay, by log-linear least squares.

    Fits ln(S) = ln(S0) - b*D and returns D (mm^2/s).
    """
    d, _ = fit_adc_with_s0(record)
    return d


def fit_adc_with_s0(record: SignalRecord):
    """Like fit_adc but also returns the estimated zero-b signal S0."""
    s = np.asarray(record.signals, dtype=float)
    if np.any(s <= 0):
        raise ValueError("signals must be positive for the log-linear fit")
    b = np.asarray(record.b_values, dtype=float)
    slope, intercept = np.polyfit(b, np.log(s), 1)
    return -float(slope), float(np.exp(intercept))


def bin_voxels(records, config: BinningConfig):
    """Bin voxel records into one Histogram2D per tumor.

    Out-of-range ADC values are tallied into each histogram's ``overflow``
    field rather than dropped. Tumors with voxels at only one timepoint get
    a warning attached.
    """
    if not records:
        raise EmptyInputError("no voxel records to bin")
    grids: dict = {}
    for rec in records:
        key = rec.tumor_id
        if key not in grids:
            grids[key] = {"cohort": rec.cohort,
                          "counts": np.zeros((config.n_adc_bins, 2), dtype=np.int64),
                          "overflow": 0}
        entry = grids[key]
        if entry["cohort"] != rec.cohort:
            raise ValueError(f"tumor {key!r} has inconsistent cohort labels")
        t = TIMEPOINTS.index(rec.timepoint)
        i = config.bin_index(rec.adc)
        if i is None:
            entry["overflow"] += 1
        else:
            entry["counts"][i, t] += 1
    out = {}
    for tumor_id, entry in sorted(grids.items()):
        warnings = ()
        per_t = entry["counts"].sum(axis=0)
        if per_t[0] == 0 or per_t[1] == 0:
            warnings = (f"tumor {tumor_id}: voxels at only one timepoint",)
        out[tumor_id] = Histogram2D(tumor_id=tumor_id, cohort=entry["cohort"],
                                    counts=entry["counts"], binning=config,
                                    overflow=entry["overflow"], warnings=warnings)
    return out


@dataclass
class VoxelLoadResult:
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (line_number, message)


_VOXEL_COLUMNS = ["tumor_id", "cohort", "timepoint", "adc"]


def load_voxel_csv(path) -> VoxelLoadResult:
    """Load voxel records; malformed rows are reported with line numbers."""
    result = VoxelLoadResult()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputFormatError(f"{path}: empty file")
        missing = [c for c in _VOXEL_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise InputFormatError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                timepoint = _TIMEPOINT_LABELS.get(row["timepoint"].strip())
                if timepoint is None:
                    raise ValueError(f"unknown timepoint {row['timepoint']!r}")
                rec = VoxelRecord(tumor_id=row["tumor_id"].strip(),
                                  cohort=row["cohort"].strip(),
                                  timepoint=timepoint,
                                  adc=float(row["adc"]))
            except (ValueError, KeyError, TypeError) as exc:
                result.errors.append((line, str(exc)))
                continue
            result.records.append(rec)
    return result


def write_voxel_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_VOXEL_COLUMNS)
        for rec in records:
            writer.writerow([rec.tumor_id, rec.cohort,
                             _TIMEPOINT_HOURS[rec.timepoint], repr(rec.adc)])


_SIGNAL_COLUMNS = ["tumor_id", "cohort", "timepoint", "voxel_id", "b", "signal"]


def load_signal_csv(path) -> VoxelLoadResult:
    """Load a signal CSV and convert each voxel group to a VoxelRecord.

    Rows are grouped by (tumor_id, cohort, timepoint, voxel_id); each group
    is fitted with fit_adc. Groups that fail validation are reported under
    the line number of their first row.
    """
    groups: dict = {}
    first_line: dict = {}
    result = VoxelLoadResult()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputFormatError(f"{path}: empty file")
        missing = [c for c in _SIGNAL_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise InputFormatError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            try:
                key = (row["tumor_id"].strip(), row["cohort"].strip(),
                       row["timepoint"].strip(), row["voxel_id"].strip())
                b = float(row["b"])
                signal = float(row["signal"])
            except (ValueError, KeyError, TypeError) as exc:
                result.errors.append((line, str(exc)))
                continue
            groups.setdefault(key, []).append((b, signal))
            first_line.setdefault(key, line)
    for key, pairs in groups.items():
        tumor_id, cohort, timepoint_label, _ = key
        line = first_line[key]
        try:
            rec = SignalRecord(b_values=tuple(p[0] for p in pairs),
                               signals=tuple(p[1] for p in pairs))
            adc = fit_adc(rec)
            timepoint = _TIMEPOINT_LABELS.get(timepoint_label)
            if timepoint is None:
                raise ValueError(f"unknown timepoint {timepoint_label!r}")
            result.records.append(VoxelRecord(tumor_id=tumor_id, cohort=cohort,
                                              timepoint=timepoint, adc=adc))
        except (ValueError, DegenerateDesignError) as exc:
            result.errors.append((line, str(exc)))
    result.records.sort(key=lambda r: (r.tumor_id, r.timepoint, r.adc))
    return result


def write_histogram_json(path, h: Histogram2D):
    with open(path, "w") as fh:
        json.dump(h.to_json_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_histogram_json(path) -> Histogram2D:
    with open(path) as fh:
        return Histogram2D.from_json_dict(json.load(fh))
