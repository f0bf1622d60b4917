"""Portable spectral water-quality analyzer.

Computes the blue-to-yellow response ratio of a sample against a plain
water reference, classifies turbidity against a threshold (default 1.3),
selects the best LDR sensor build from calibration batches, and monitors
a time series for the first turbid point.
"""

import csv
import statistics
from dataclasses import dataclass
from enum import Enum

TURBIDITY_THRESHOLD = 1.3
DIVISOR_GUARD_V = 0.05  # below this a channel counts as dark/dead
CSV_HEADER = ["sample_id", "t_hours", "red_v", "green_v", "blue_v", "yellow_v"]

# potentiometer tuning and source distance per LDR build
LDR_TUNING_OHMS = {3: 235.0, 5: 623.0, 7: 973.0}
LDR_SOURCE_DISTANCE_CM = {3: 4.0, 5: 4.0, 7: 3.0}


class WaterClass(Enum):
    CLEAR = "Clear"
    TURBID = "Turbid"


class DegenerateReference(ValueError):
    """A guarded divisor voltage is at or below the dark-reading floor."""


class InsufficientReplicates(ValueError):
    """A calibration cell has fewer than the required repeats."""


class CsvFormatError(ValueError):
    """Spectral CSV does not match the required header or row shape."""


@dataclass(frozen=True)
class SpectralReading:
    sample_id: str
    t_hours: float
    red_v: float
    green_v: float
    blue_v: float
    yellow_v: float

    def __post_init__(self):
        for name in ("red_v", "green_v", "blue_v", "yellow_v"):
            v = getattr(self, name)
            if not (0.0 <= v <= 5.0):
                raise ValueError(f"{name} out of 0-5 V range: {v}")
        if self.t_hours < 0:
            raise ValueError(f"negative sample time: {self.t_hours}")


@dataclass(frozen=True)
class CalibrationRecord:
    ldr_mm: int
    tuning_ohms: float
    source_distance_cm: float


@dataclass(frozen=True)
class BYRResult:
    ratio: float
    classification: WaterClass
    threshold: float = TURBIDITY_THRESHOLD


@dataclass(frozen=True)
class MonitorPoint:
    t_hours: float
    ratio: float  # None when the point was degenerate
    classification: WaterClass  # None when the point was degenerate
    error: str = None


def byr(sample: SpectralReading, water_ref: SpectralReading) -> float:
    """Blue-to-yellow response ratio of a sample against plain water.

    (blue_sample / blue_water) / (yellow_sample / yellow_water). Invariant
    under any common gain on both readings, so LED dimming over the
    device's lifetime cancels out.
    """
    for v, what in ((water_ref.blue_v, "reference blue"),
                    (water_ref.yellow_v, "reference yellow"),
                    (sample.yellow_v, "sample yellow")):
        if v <= DIVISOR_GUARD_V:
            raise DegenerateReference(f"{what} voltage {v} V at or below "
                                      f"{DIVISOR_GUARD_V} V guard")
    return (sample.blue_v / water_ref.blue_v) / (sample.yellow_v / water_ref.yellow_v)


def classify(ratio: float, threshold: float = TURBIDITY_THRESHOLD) -> WaterClass:
    """Turbid iff ratio strictly exceeds the threshold; the boundary value
    itself is Clear."""
    if ratio <= 0:
        raise ValueError(f"ratio must be positive: {ratio}")
    return WaterClass.TURBID if ratio > threshold else WaterClass.CLEAR


def byr_result(sample, water_ref, threshold=TURBIDITY_THRESHOLD) -> BYRResult:
    ratio = byr(sample, water_ref)
    return BYRResult(ratio=ratio, classification=classify(ratio, threshold),
                     threshold=threshold)


def select_calibration(batches, min_repeats: int = 3):
    """Pick the LDR build with the widest blue response across sample types
    relative to its within-sample scatter.

    `batches` maps ldr_mm -> {sample_type -> [SpectralReading, ...]}. Per
    sensor: range = max - min of per-sample mean blue voltage; score =
    range / (mean within-sample stdev + 1e-6). Ties go to the smaller LDR.
    Returns (CalibrationRecord, score report dict).
    """
    if len(batches) < 2:
        raise ValueError("need at least 2 sensors to select between")
    report = {}
    for ldr_mm, samples in batches.items():
        if len(samples) < 2:
            raise ValueError(f"{ldr_mm} mm sensor needs >= 2 sample types")
        means, sds = [], []
        for sample_type, readings in samples.items():
            if len(readings) < min_repeats:
                raise InsufficientReplicates(
                    f"{ldr_mm} mm / {sample_type}: {len(readings)} repeats, "
                    f"need {min_repeats}")
            blues = [r.blue_v for r in readings]
            means.append(statistics.fmean(blues))
            sds.append(statistics.stdev(blues))
        rng = max(means) - min(means)
        mean_sd = statistics.fmean(sds)
        report[ldr_mm] = {
            "range_v": rng,
            "mean_sd_v": mean_sd,
            "score": rng / (mean_sd + 1e-6),
        }
    best = max(sorted(report), key=lambda k: report[k]["score"])
    return CalibrationRecord(
        ldr_mm=best,
        tuning_ohms=LDR_TUNING_OHMS.get(best, 0.0),
        source_distance_cm=LDR_SOURCE_DISTANCE_CM.get(best, 4.0),
    ), report


def monitor(series, water_ref: SpectralReading,
            threshold: float = TURBIDITY_THRESHOLD):
    """Classify each point of a time series against one water reference.

    Series must be sorted by t_hours. Degenerate points are flagged, not
    fatal. Returns (points, first_turbid_t or None, run-length summary of
    consecutive classifications).
    """
    if not series:
        raise ValueError("empty series")
    if any(b.t_hours < a.t_hours for a, b in zip(series, series[1:])):
        raise ValueError("series must be sorted by t_hours")
    points = []
    first_turbid_t = None
    for reading in series:
        try:
            ratio = byr(reading, water_ref)
            cls = classify(ratio, threshold)
        except DegenerateReference as exc:
            points.append(MonitorPoint(reading.t_hours, None, None, str(exc)))
            continue
        points.append(MonitorPoint(reading.t_hours, ratio, cls))
        if cls is WaterClass.TURBID and first_turbid_t is None:
            first_turbid_t = reading.t_hours
    runs = []
    for p in points:
        name = p.classification.value if p.classification else "Error"
        if runs and runs[-1][0] == name:
            runs[-1] = (name, runs[-1][1] + 1)
        else:
            runs.append((name, 1))
    return points, first_turbid_t, runs


def read_csv(path):
    """Load spectral readings from CSV.

    Header must be exactly `sample_id,t_hours,red_v,green_v,blue_v,yellow_v`
    (UTF-8, decimal point, LF).
    """
    readings = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty CSV") from None
        if header != CSV_HEADER:
            raise CsvFormatError(
                f"bad header {header!r}, expected {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CsvFormatError(f"line {lineno}: expected "
                                     f"{len(CSV_HEADER)} fields, got {len(row)}")
            try:
                readings.append(SpectralReading(
                    sample_id=row[0],
                    t_hours=float(row[1]),
                    red_v=float(row[2]),
                    green_v=float(row[3]),
                    blue_v=float(row[4]),
                    yellow_v=float(row[5]),
                ))
            except ValueError as exc:
                raise CsvFormatError(f"line {lineno}: {exc}") from None
    return readings


def group_by_sample(readings):
    groups = {}
    for r in readings:
        groups.setdefault(r.sample_id, []).append(r)
    for rs in groups.values():
        rs.sort(key=lambda r: r.t_hours)
    return groups


def calibration_batches_from_readings(readings):
    """Group calibration CSV rows into select_calibration batches.

    sample_id convention: `<ldr>mm/<sample_type>`, e.g. `5mm/salt1`.
    """
    batches = {}
    for r in readings:
        sensor, sep, sample_type = r.sample_id.partition("/")
        if not sep or not sensor.endswith("mm"):
            raise CsvFormatError(
                f"calibration sample_id must look like '5mm/salt1': {r.sample_id!r}")
        try:
            ldr_mm = int(sensor[:-2])
        except ValueError:
            raise CsvFormatError(f"bad LDR size in {r.sample_id!r}") from None
        batches.setdefault(ldr_mm, {}).setdefault(sample_type, []).append(r)
    return batches
