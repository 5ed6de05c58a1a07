import logging

import numpy as np
import numpy.testing as npt
import pytest

from cptkit.errors import AllRejected, BadInput, EmptyOverlap, OutOfRange
from cptkit.scans import (
    FrequencyLog,
    ScanRecord,
    bin_scans,
    center_spectrum,
    correlate_frequency,
    counts_to_population,
    load_population_csv,
    load_scan_csv,
    reduce_scans,
    save_population_csv,
    save_scan_csv,
    threshold_and_average,
)


def _scan(ts, drive, counts, direction="up", unit="V"):
    return ScanRecord(
        np.asarray(ts, float), np.asarray(drive, float), np.asarray(counts, float),
        direction, unit,
    )


def _log(ts, freqs):
    return FrequencyLog(np.asarray(ts, float), np.asarray(freqs, float))


def _hz(freqs, counts, direction="up"):
    """A frequency-correlated scan, as produced by correlate_frequency."""
    freqs = np.asarray(freqs, float)
    counts = np.asarray(counts, float)
    ts = np.arange(freqs.size, dtype=float)
    return ScanRecord(ts, freqs, counts, direction, "Hz")


class TestScanRecord:
    def test_rejects_decreasing_timestamps(self):
        with pytest.raises(BadInput):
            _scan([0.0, 2.0, 1.0], [0.0, 1.0, 2.0], [1.0, 1.0, 1.0])

    def test_rejects_unknown_direction(self):
        with pytest.raises(BadInput):
            _scan([0.0, 1.0], [0.0, 1.0], [1.0, 1.0], direction="sideways")


class TestCsvIo:
    def test_scan_round_trip(self, tmp_path):
        scan = _scan([0.0, 0.5, 1.0], [0.1, 0.2, 0.3], [900.0, 2500.0, 4100.0],
                     direction="down")
        p = tmp_path / "scan.csv"
        save_scan_csv(p, scan)
        back = load_scan_csv(p)
        npt.assert_allclose(back.timestamps, scan.timestamps, rtol=0.0)
        npt.assert_allclose(back.counts, scan.counts, rtol=0.0)
        assert back.direction == "down"
        assert back.drive_unit == "V"

    def test_missing_metadata_line_diagnosed(self, tmp_path):
        p = tmp_path / "scan.csv"
        p.write_text("timestamp_s,drive,counts_per_s\n0,0,1\n")
        with pytest.raises(BadInput, match="line 1"):
            load_scan_csv(p)

    def test_bad_value_diagnosed_with_line(self, tmp_path):
        p = tmp_path / "scan.csv"
        p.write_text(
            "# direction=up, drive_unit=V\n"
            "timestamp_s,drive,counts_per_s\n"
            "0.0,0.0,1000\n"
            "1.0,not_a_number,1000\n"
        )
        with pytest.raises(BadInput, match="line 4"):
            load_scan_csv(p)

    def test_population_round_trip(self, tmp_path):
        from cptkit.cpt import CptSpectrum

        spec = CptSpectrum(
            detunings_d=np.array([-1e9, 0.0, 1e9]),
            values=np.array([0.18, 0.15, 0.18]),
            kind="population",
        )
        p = tmp_path / "pop.csv"
        save_population_csv(p, spec)
        back = load_population_csv(p)
        npt.assert_allclose(back.detunings_d, spec.detunings_d, rtol=0.0)
        npt.assert_allclose(back.values, spec.values, rtol=0.0)


class TestCorrelateFrequency:
    def test_linear_interpolation_midpoint(self):
        flog = _log([0.0, 10.0], [10e9, 20e9])
        scan = _scan([5.0], [0.5], [3000.0])
        out = correlate_frequency(scan, flog)
        npt.assert_allclose(out.drive, [15e9], rtol=0.0)
        assert out.drive_unit == "Hz"

    def test_sample_outside_log_span_rejected(self):
        flog = _log([0.0, 10.0], [10e9, 20e9])
        scan = _scan([11.0], [0.5], [3000.0])
        with pytest.raises(OutOfRange):
            correlate_frequency(scan, flog)

    def test_large_log_gap_warns(self, caplog):
        flog = _log([0.0, 0.5, 3.0], [10e9, 11e9, 12e9])
        scan = _scan([1.0], [0.5], [3000.0])
        with caplog.at_level(logging.WARNING, logger="cptkit.scans"):
            correlate_frequency(scan, flog)
        assert any("gap" in r.message for r in caplog.records)


class TestBinning:
    def test_requires_frequency_units(self):
        volts = _scan([0.0, 1.0], [0.0, 1.0], [3000.0, 3000.0])
        with pytest.raises(BadInput):
            bin_scans([volts])

    def test_reference_defines_uniform_bins(self):
        a = _hz(np.linspace(0.0, 10e9, 11), np.full(11, 3000.0))
        binned = bin_scans([a], reference=0)
        assert binned.bin_centers.size == 11
        widths = np.diff(binned.bin_centers)
        npt.assert_allclose(widths, widths[0], rtol=1e-9)

    def test_nearest_center_assignment(self):
        # centers at 0, 1, 2 GHz; a sample at 1.4 GHz joins the 1 GHz bin
        ref = _hz([0.0, 1e9, 2e9], [3000.0, 3000.0, 3000.0])
        other = _hz([1.4e9], [9000.0])
        binned = bin_scans([ref, other], reference=0)
        assert binned.contributions[1] == (3000.0, 9000.0)

    def test_sample_beyond_half_bin_dropped(self):
        ref = _hz([0.0, 1e9, 2e9], [3000.0, 3000.0, 3000.0])
        # second sample lies 0.9 GHz past the last center: dropped
        stray = _hz([1e9, 2.9e9], [4000.0, 5000.0])
        binned = bin_scans([ref, stray], reference=0)
        assert all(5000.0 not in c for c in binned.contributions)
        assert 4000.0 in binned.contributions[1]

    def test_disjoint_ranges_raise(self):
        a = _hz([0.0, 1e9], [3e3, 3e3])
        b = _hz([5e9, 6e9], [3e3, 3e3])
        with pytest.raises(EmptyOverlap):
            bin_scans([a, b], reference=0)

    def test_mixed_directions_rejected(self):
        a = _hz([0.0, 1e9], [3e3, 3e3], direction="up")
        b = _hz([0.0, 1e9], [3e3, 3e3], direction="down")
        with pytest.raises(BadInput):
            bin_scans([a, b])


class TestThreshold:
    def test_low_contributions_removed(self):
        binned = bin_scans([
            _hz([0.0, 1e9], [1500.0, 2500.0]),
            _hz([0.0, 1e9], [3500.0, 800.0]),
        ])
        reduced = threshold_and_average(binned, min_rate=2000.0)
        npt.assert_allclose(reduced.mean_counts, [3500.0, 2500.0])
        assert list(reduced.n_contributing) == [1, 1]

    def test_threshold_is_inclusive(self):
        binned = bin_scans([_hz([0.0, 1e9], [2000.0, 2500.0])])
        reduced = threshold_and_average(binned, min_rate=2000.0)
        npt.assert_allclose(reduced.mean_counts, [2000.0, 2500.0])

    def test_all_below_threshold_raises(self):
        binned = bin_scans([_hz([0.0, 1e9], [100.0, 200.0])])
        with pytest.raises(AllRejected):
            threshold_and_average(binned, min_rate=2000.0)

    def test_raising_threshold_never_lowers_surviving_mean(self, rng):
        f = np.linspace(0.0, 1e9, 8)
        records = [_hz(f, rng.uniform(500.0, 9000.0, size=8)) for _ in range(5)]
        binned = bin_scans(records, reference=0)
        lo = threshold_and_average(binned, min_rate=1000.0)
        hi = threshold_and_average(binned, min_rate=4000.0)
        for m_lo, m_hi in zip(lo.mean_counts, hi.mean_counts):
            if not np.isnan(m_hi):
                assert m_hi >= m_lo - 1e-9


class TestCounts:
    def test_population_formula(self):
        from cptkit.scans import ReducedSpectrum

        reduced = ReducedSpectrum(
            bin_centers=np.array([-1e9, 0.0, 1e9]),
            mean_counts=np.array([12500.0, 9500.0, 12500.0]),
            n_contributing=np.array([2, 2, 2]),
            direction="up",
            settings={},
        )
        spec = counts_to_population(reduced, f_sat=30000.0, background=500.0)
        npt.assert_allclose(spec.values, [0.2, 0.15, 0.2])
        assert spec.kind == "population"

    def test_negative_rates_clipped_with_warning(self, caplog):
        from cptkit.scans import ReducedSpectrum

        reduced = ReducedSpectrum(
            bin_centers=np.array([0.0, 1e9, 2e9, 3e9, 4e9]),
            mean_counts=np.array([400.0, 9500.0, 9500.0, 9500.0, 9500.0]),
            n_contributing=np.array([1, 1, 1, 1, 1]),
            direction="up",
            settings={},
        )
        with caplog.at_level(logging.WARNING, logger="cptkit.scans"):
            spec = counts_to_population(reduced, f_sat=30000.0, background=500.0)
        assert spec.values[0] == 0.0
        assert any("clip" in r.message for r in caplog.records)


def _make_raw(params=None, n=201, f_center=400e12, span=2.5e10, f_sat=30000.0,
              direction="up", dark=False):
    """Synthesize one scan plus a matching frequency log."""
    from cptkit.cpt import _rho33_direct
    from util import default_fixed, reference_params

    params = params or reference_params("a")
    tl = np.linspace(0.0, 200.0, 401)
    fl = f_center + np.linspace(-span, span, 401)
    flog = _log(tl, fl)
    ts = np.linspace(0.5, 199.5, n)
    det = np.interp(ts, tl, fl) - f_center
    pop = _rho33_direct(params, default_fixed(), det)
    counts = pop * 2.0 * f_sat + 500.0
    if dark:
        counts = np.full(n, 120.0)
    scan = _scan(ts, np.linspace(0.0, 10.0, n), counts, direction=direction)
    return scan, flog


class TestReducePipeline:
    def test_end_to_end_recovers_center_and_population(self):
        scan, flog = _make_raw()
        out = reduce_scans([scan], flog, 30000.0)
        assert set(out) == {"up"}
        spec = out["up"]["spectrum"]
        # dip sits at zero detuning after centering
        i_min = int(np.argmin(spec.values))
        assert abs(spec.detunings_d[i_min]) < 2.0 * (spec.detunings_d[1] - spec.detunings_d[0])
        assert 0.10 < spec.values[i_min] < 0.17
        assert 0.17 < spec.values[0] < 0.22

    def test_directions_reduced_separately(self):
        up, flog = _make_raw(direction="up")
        down, _ = _make_raw(direction="down")
        out = reduce_scans([up, down], flog, 30000.0)
        assert set(out) == {"up", "down"}

    def test_merge_directions_combines(self):
        up, flog = _make_raw(direction="up")
        down, _ = _make_raw(direction="down")
        out = reduce_scans([up, down], flog, 30000.0, merge_directions=True)
        assert set(out) == {"merged"}
        sidecar = out["merged"]["sidecar"]
        assert sidecar["n_scans"] == 2
        assert sidecar["settings"]["merge_directions"] is True

    def test_dark_scan_contributes_nothing(self):
        bright, flog = _make_raw()
        dark, _ = _make_raw(dark=True)
        solo = reduce_scans([bright], flog, 30000.0)["up"]
        both = reduce_scans([bright, dark], flog, 30000.0)["up"]
        npt.assert_allclose(
            both["spectrum"].values, solo["spectrum"].values, rtol=0.0
        )
        assert int(np.max(both["reduced"].n_contributing)) == 1

    def test_deterministic(self):
        scan, flog = _make_raw()
        a = reduce_scans([scan], flog, 30000.0)["up"]["spectrum"]
        b = reduce_scans([scan], flog, 30000.0)["up"]["spectrum"]
        npt.assert_allclose(a.values, b.values, rtol=0.0)
        npt.assert_allclose(a.detunings_d, b.detunings_d, rtol=0.0)

    def test_sidecar_carries_settings(self):
        scan, flog = _make_raw()
        sidecar = reduce_scans([scan], flog, 30000.0)["up"]["sidecar"]
        assert sidecar["settings"]["f_sat_counts_per_s"] == 30000.0
        assert sidecar["settings"]["min_rate_counts_per_s"] == 2000.0
        assert sidecar["n_scans"] == 1
        assert "center_frequency_hz" in sidecar


class TestCenterSpectrum:
    def test_known_offset_recovered(self):
        x = np.linspace(-10e9, 10e9, 201)
        y = 12000.0 - 3000.0 * np.exp(-((x - 1e9) ** 2) / (2 * (2.5e9) ** 2))
        from cptkit.scans import ReducedSpectrum

        reduced = ReducedSpectrum(
            bin_centers=x + 400e12, mean_counts=y,
            n_contributing=np.ones(201, dtype=int), direction="up", settings={},
        )
        centered = center_spectrum(reduced)
        npt.assert_allclose(centered.center_frequency, 400e12 + 1e9, atol=3e7)
        i_min = int(np.argmin(centered.mean_counts))
        assert abs(centered.bin_centers[i_min]) < 2e8
