"""Raw-scan reduction: frequency correlation, binning, thresholding,
averaging, centering, and conversion of count rates to population.

Scan files are CSV with one metadata line and a header:

    # direction=up, drive_unit=V
    timestamp_s,drive,counts_per_s
    0.0,0.125,11873.2

The frequency log is CSV with header ``timestamp_s,frequency_hz``. The
reduced output is CSV ``detuning_hz,population`` plus a JSON sidecar
carrying the center frequency, per-bin bookkeeping and every pipeline
setting.
"""

from dataclasses import dataclass, field, replace
import csv
import logging

import numpy as np

from .cpt import CptSpectrum
from .errors import AllRejected, BadInput, EmptyOverlap, OutOfRange
from .lineshapes import Curve1D, fit_gaussian_prefit

log = logging.getLogger(__name__)

DIRECTIONS = ("up", "down")
DRIVE_UNITS = ("V", "Hz")

DEFAULT_MIN_RATE = 2000.0  # counts/s; contributions under 2 kc/s are rejected
DEFAULT_BACKGROUND = 500.0  # counts/s dark-count level
_LOG_GAP_WARN_S = 1.0


@dataclass(frozen=True)
class ScanRecord:
    """One raw scan: timestamped drive samples with count rates."""

    timestamps: np.ndarray
    drive: np.ndarray
    counts: np.ndarray
    direction: str
    drive_unit: str = "V"

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        dr = np.asarray(self.drive, dtype=np.float64)
        ct = np.asarray(self.counts, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "drive", dr)
        object.__setattr__(self, "counts", ct)
        if not (ts.ndim == 1 and ts.shape == dr.shape == ct.shape and ts.size > 0):
            raise BadInput("scan columns must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(ts) < 0):
            raise BadInput("scan timestamps must be non-decreasing")
        if self.direction not in DIRECTIONS:
            raise BadInput(f"direction must be one of {DIRECTIONS}")
        if self.drive_unit not in DRIVE_UNITS:
            raise BadInput(f"drive_unit must be one of {DRIVE_UNITS}")


@dataclass(frozen=True)
class FrequencyLog:
    """Wavemeter record: laser frequency vs timestamp."""

    timestamps: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        fr = np.asarray(self.frequencies, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "frequencies", fr)
        if not (ts.ndim == 1 and ts.shape == fr.shape and ts.size >= 2):
            raise BadInput("frequency log needs at least two (timestamp, frequency) rows")
        if np.any(np.diff(ts) < 0):
            raise BadInput("frequency log timestamps must be non-decreasing")


@dataclass(frozen=True)
class BinnedScans:
    """Uniform bins with per-bin contribution lists (one entry per sample)."""

    bin_centers: np.ndarray  # Hz, uniform
    contributions: tuple  # tuple of per-bin float tuples, deterministic order
    direction: str
    n_scans: int


@dataclass(frozen=True)
class ReducedSpectrum:
    """Averaged, thresholded spectrum on uniform frequency bins."""

    bin_centers: np.ndarray  # Hz (absolute until centered, then detuning)
    mean_counts: np.ndarray  # counts/s; NaN where a bin lost all contributions
    n_contributing: np.ndarray
    center_frequency: float = 0.0
    direction: str = "up"
    settings: dict = field(default_factory=dict)


# -- file I/O --------------------------------------------------------------

def _parse_metadata(line: str, path) -> dict:
    meta = {}
    body = line.lstrip("#").strip()
    for item in body.split(","):
        if "=" not in item:
            raise BadInput(f"{path}: line 1: expected key=value, got {item.strip()!r}")
        k, v = item.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def load_scan_csv(path) -> ScanRecord:
    """Read one scan file, validating the metadata line and header."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise BadInput(f"{path}: line 1: missing '# direction=..., drive_unit=...'")
        meta = _parse_metadata(first, path)
        for key in ("direction", "drive_unit"):
            if key not in meta:
                raise BadInput(f"{path}: line 1: missing field {key}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp_s", "drive", "counts_per_s"]:
            raise BadInput(f"{path}: line 2: header must be timestamp_s,drive,counts_per_s")
        ts, dr, ct = [], [], []
        for i, row in enumerate(reader, start=3):
            if not row:
                continue
            try:
                ts.append(float(row[0]))
                dr.append(float(row[1]))
                ct.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise BadInput(f"{path}: line {i}: {exc}") from exc
    return ScanRecord(
        timestamps=np.array(ts),
        drive=np.array(dr),
        counts=np.array(ct),
        direction=meta["direction"],
        drive_unit=meta["drive_unit"],
    )


def save_scan_csv(path, scan: ScanRecord):
    with open(path, "w", newline="") as fh:
        fh.write(f"# direction={scan.direction}, drive_unit={scan.drive_unit}\n")
        fh.write("timestamp_s,drive,counts_per_s\n")
        for t, d, c in zip(scan.timestamps, scan.drive, scan.counts):
            fh.write(f"{float(t)!r},{float(d)!r},{float(c)!r}\n")


def load_frequency_log_csv(path) -> FrequencyLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp_s", "frequency_hz"]:
            raise BadInput(f"{path}: line 1: header must be timestamp_s,frequency_hz")
        ts, fr = [], []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts.append(float(row[0]))
                fr.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise BadInput(f"{path}: line {i}: {exc}") from exc
    return FrequencyLog(timestamps=np.array(ts), frequencies=np.array(fr))


def save_frequency_log_csv(path, flog: FrequencyLog):
    with open(path, "w", newline="") as fh:
        fh.write("timestamp_s,frequency_hz\n")
        for t, f in zip(flog.timestamps, flog.frequencies):
            fh.write(f"{float(t)!r},{float(f)!r}\n")


def save_population_csv(path, spectrum: CptSpectrum):
    """Write the reduced output CSV (detuning_hz,population)."""
    with open(path, "w", newline="") as fh:
        fh.write("detuning_hz,population\n")
        for d, v in zip(spectrum.detunings_d, spectrum.values):
            fh.write(f"{float(d)!r},{float(v)!r}\n")


def load_population_csv(path) -> CptSpectrum:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["detuning_hz", "population"]:
            raise BadInput(f"{path}: line 1: header must be detuning_hz,population")
        det, val = [], []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                det.append(float(row[0]))
                val.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise BadInput(f"{path}: line {i}: {exc}") from exc
    return CptSpectrum(detunings_d=np.array(det), values=np.array(val), kind="population")


# -- pipeline steps --------------------------------------------------------

def correlate_frequency(scan: ScanRecord, flog: FrequencyLog) -> ScanRecord:
    """Replace drive voltages with interpolated log frequencies.

    Linear interpolation of the frequency log at each sample timestamp.
    Every sample must fall inside the log's time span.
    """
    t0, t1 = flog.timestamps[0], flog.timestamps[-1]
    if scan.timestamps[0] < t0 or scan.timestamps[-1] > t1:
        raise OutOfRange(
            f"scan spans [{scan.timestamps[0]}, {scan.timestamps[-1]}] s but the "
            f"frequency log only covers [{t0}, {t1}] s"
        )
    gap = float(np.max(np.diff(flog.timestamps))) if flog.timestamps.size > 1 else 0.0
    if gap > _LOG_GAP_WARN_S:
        log.warning("frequency log has a %.2f s update gap; interpolation may drift", gap)
    freqs = np.interp(scan.timestamps, flog.timestamps, flog.frequencies)
    return replace(scan, drive=freqs, drive_unit="Hz")


def bin_scans(scans, reference: int = 0) -> BinnedScans:
    """Assign every sample of every scan to uniform bins.

    Bin centers come from the reference scan: uniform spacing over its
    frequency range with one bin per reference sample. Samples are
    assigned to the nearest center; samples more than half a bin outside
    the range are dropped. All scans must be frequency-correlated and
    share one direction (directions are distinct data sets).
    """
    scans = list(scans)
    if not scans:
        raise BadInput("no scans given")
    if not 0 <= reference < len(scans):
        raise BadInput(f"reference index {reference} out of range")
    for s in scans:
        if s.drive_unit != "Hz":
            raise BadInput("all scans must be frequency-correlated before binning")
    direction = scans[0].direction
    if any(s.direction != direction for s in scans):
        raise BadInput(
            "up and down scans are distinct data sets; reduce them separately"
        )
    lo_all = max(float(np.min(s.drive)) for s in scans)
    hi_all = min(float(np.max(s.drive)) for s in scans)
    if len(scans) > 1 and lo_all > hi_all:
        raise EmptyOverlap("scans share no frequency range")

    ref = scans[reference]
    lo, hi = float(np.min(ref.drive)), float(np.max(ref.drive))
    n_bins = ref.drive.size
    if n_bins < 2 or hi <= lo:
        raise BadInput("reference scan must span a nonzero frequency range")
    centers = np.linspace(lo, hi, n_bins)
    width = centers[1] - centers[0]

    buckets: list[list[float]] = [[] for _ in range(n_bins)]
    for s in scans:
        idx = np.rint((s.drive - lo) / width).astype(np.intp)
        keep = (idx >= 0) & (idx < n_bins)
        for i, c in zip(idx[keep], s.counts[keep]):
            buckets[i].append(float(c))
    return BinnedScans(
        bin_centers=centers,
        contributions=tuple(tuple(b) for b in buckets),
        direction=direction,
        n_scans=len(scans),
    )


def threshold_and_average(
    binned: BinnedScans, min_rate: float = DEFAULT_MIN_RATE
) -> ReducedSpectrum:
    """Per-bin mean over contributions at or above min_rate.

    Contributions under the threshold (spectral-jump rejection) are
    dropped individually; bins left with no contributions are flagged by
    n_contributing = 0 and a NaN mean.
    """
    n = binned.bin_centers.size
    means = np.full(n, np.nan)
    counts = np.zeros(n, dtype=np.intp)
    for i, contrib in enumerate(binned.contributions):
        kept = [c for c in contrib if c >= min_rate]
        counts[i] = len(kept)
        if kept:
            means[i] = sum(kept) / len(kept)
    if int(counts.sum()) == 0:
        raise AllRejected(f"every contribution fell below {min_rate} counts/s")
    return ReducedSpectrum(
        bin_centers=binned.bin_centers.copy(),
        mean_counts=means,
        n_contributing=counts,
        direction=binned.direction,
        settings={"min_rate": float(min_rate), "n_scans": binned.n_scans},
    )


def center_spectrum(spec: ReducedSpectrum) -> ReducedSpectrum:
    """Shift bin centers so the Gaussian-prefit dip center sits at zero."""
    ok = ~np.isnan(spec.mean_counts)
    if int(ok.sum()) < 5:
        raise BadInput("too few populated bins to locate the dip center")
    center = fit_gaussian_prefit(Curve1D(spec.bin_centers[ok], spec.mean_counts[ok]))
    settings = dict(spec.settings)
    return ReducedSpectrum(
        bin_centers=spec.bin_centers - center,
        mean_counts=spec.mean_counts.copy(),
        n_contributing=spec.n_contributing.copy(),
        center_frequency=float(center),
        direction=spec.direction,
        settings=settings,
    )


def counts_to_population(
    spec: ReducedSpectrum,
    f_sat: float,
    background: float = DEFAULT_BACKGROUND,
) -> CptSpectrum:
    """Convert count rates to excited-state population.

    population = 0.5 * (counts - background) / f_sat, so the count rate
    at saturation maps to 50% excited-state population. Negative results
    are clipped to zero; values above one are kept. NaN (empty) bins are
    dropped.
    """
    if not f_sat > 0:
        raise BadInput("f_sat must be > 0")
    ok = ~np.isnan(spec.mean_counts)
    det = spec.bin_centers[ok]
    pop = 0.5 * (spec.mean_counts[ok] - background) / f_sat
    clipped = int(np.count_nonzero(pop < 0))
    if clipped:
        log.warning("%d bins had counts below background; population clipped to 0", clipped)
    if np.any(pop > 1):
        log.warning("%d bins exceed full excited-state population", int(np.count_nonzero(pop > 1)))
    pop = np.maximum(pop, 0.0)
    return CptSpectrum(detunings_d=det, values=pop, kind="population")


def _conversion_flags(spec: ReducedSpectrum, f_sat: float, background: float) -> dict:
    ok = ~np.isnan(spec.mean_counts)
    pop = 0.5 * (spec.mean_counts[ok] - background) / f_sat
    return {
        "clipped_negative_bins": [int(i) for i in np.nonzero(pop < 0)[0]],
        "population_above_one_bins": [int(i) for i in np.nonzero(pop > 1)[0]],
    }


def reduce_scans(
    scans,
    flog: FrequencyLog,
    f_sat: float,
    *,
    min_rate: float = DEFAULT_MIN_RATE,
    background: float = DEFAULT_BACKGROUND,
    reference: int = 0,
    merge_directions: bool = False,
):
    """Full pipeline: correlate, bin, threshold, average, center, convert.

    Returns a dict keyed by scan direction; each value is a dict with the
    population spectrum, the centered ReducedSpectrum, and a sidecar dict
    of provenance (settings, center frequency, rejected bins). Directions
    are reduced separately unless merge_directions relabels everything as
    one set.
    """
    scans = [correlate_frequency(s, flog) for s in scans]
    if merge_directions:
        # binning requires one direction label; the output key records
        # that the groups were pooled
        scans = [replace(s, direction="up") for s in scans]
    by_dir: dict[str, list[ScanRecord]] = {}
    for s in scans:
        key = "merged" if merge_directions else s.direction
        by_dir.setdefault(key, []).append(s)

    out = {}
    for direction, group in sorted(by_dir.items()):
        ref = min(reference, len(group) - 1)
        binned = bin_scans(group, reference=ref)
        averaged = threshold_and_average(binned, min_rate=min_rate)
        centered = center_spectrum(averaged)
        spectrum = counts_to_population(centered, f_sat, background=background)
        conv_flags = _conversion_flags(centered, f_sat, background)
        sidecar = {
            "direction": direction,
            "center_frequency_hz": centered.center_frequency,
            "n_scans": len(group),
            "n_bins": int(centered.bin_centers.size),
            "rejected_bins": [int(i) for i in np.nonzero(centered.n_contributing == 0)[0]],
            "n_contributing": [int(c) for c in centered.n_contributing],
            "settings": {
                "min_rate_counts_per_s": float(min_rate),
                "background_counts_per_s": float(background),
                "f_sat_counts_per_s": float(f_sat),
                "reference_scan": int(ref),
                "merge_directions": bool(merge_directions),
            },
            **conv_flags,
        }
        out[direction] = {
            "spectrum": spectrum,
            "reduced": centered,
            "sidecar": sidecar,
        }
    return out
