"""Batch command-line front-end.

Every pipeline is exposed as a subcommand with file-based I/O. Output
JSON reports embed the effective configuration, sha-256 hashes of all
input files and the tool version, so identical inputs and seed produce
byte-identical reports. Exit codes: 0 success, 2 input/validation
error, 3 numerical or fit failure.
"""

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .broadening import BroadeningInputs, phononic_component
from .config import effective_delta_12, load_config, require
from .constants import TWO_PI
from .cpt import (
    CptFitParams,
    FixedRates,
    default_detuning_grid,
    dephasing_upper_bound,
    fit_cpt,
    sensitivity,
    simulate_cpt_spectrum,
)
from .errors import BadInput, NumericalError, ValidationError
from .lineshapes import (
    Curve1D,
    fit_double_lorentzian,
    fit_exponential_lifetime,
    fit_g2,
    fit_gaussian_prefit,
    fit_lorentzian,
    fit_saturation,
)
from .scans import (
    load_frequency_log_csv,
    load_population_csv,
    load_scan_csv,
    reduce_scans,
    save_population_csv,
)
from .thermal import (
    ModelFamily,
    cutoff_temperatures,
    detect_cutoff,
    fit_thermal_model,
    incremental_r2,
    load_thermal_csv,
    total_abs_error,
)

_LINE_MODELS = (
    "lorentzian",
    "double-lorentzian",
    "gaussian-prefit",
    "exponential",
    "saturation",
    "g2",
)


# -- report plumbing -------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(path, command: str, results: dict, cfg: dict, input_paths):
    """Deterministic provenance JSON: config, input hashes, version."""
    report = {
        "tool": "cptkit",
        "version": __version__,
        "command": command,
        "config": cfg,
        "inputs": {str(p): _sha256(p) for p in input_paths},
        "results": results,
    }
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def _save_plot(path, x, y, y_fit=None, xlabel="", ylabel="", title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, y, ".", markersize=3, label="data")
    if y_fit is not None:
        ax.plot(x, y_fit, "-", linewidth=1.2, label="model")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_path(out_path) -> str:
    return str(Path(out_path).with_suffix(".svg"))


# -- shared builders -------------------------------------------------------

def _fixed_rates(cfg) -> FixedRates:
    phys = cfg["physics"]
    return FixedRates.from_lifetime(float(phys["tau_se_s"]), float(phys["branch_ratio"]))


def _sim_params(cfg) -> CptFitParams:
    sim = cfg["simulate"]
    return CptFitParams(
        omega_c=TWO_PI * float(sim["omega_c_hz"]),
        omega_d=TWO_PI * float(sim["omega_d_hz"]),
        gamma_minus=1.0 / float(sim["t_minus_s"]),
        gamma_deph=float(sim["gamma_deph_per_s"]),
        delta_12=effective_delta_12(cfg),
        temperature=float(cfg["physics"]["temperature_k"]),
    )


def _init_params(cfg) -> CptFitParams:
    fit = cfg["fit"]
    return CptFitParams(
        omega_c=TWO_PI * float(fit["init_omega_c_hz"]),
        omega_d=TWO_PI * float(fit["init_omega_d_hz"]),
        gamma_minus=1.0 / float(fit["init_t_minus_s"]),
        gamma_deph=0.0,
        delta_12=effective_delta_12(cfg),
        temperature=float(cfg["physics"]["temperature_k"]),
    )


# -- subcommands -----------------------------------------------------------

def cmd_simulate_cpt(args, cfg) -> int:
    sim = cfg["simulate"]
    params = _sim_params(cfg)
    fixed = _fixed_rates(cfg)
    if sim["grid_min_hz"] is not None and sim["grid_max_hz"] is not None:
        grid = np.linspace(
            float(sim["grid_min_hz"]), float(sim["grid_max_hz"]), int(sim["grid_points"])
        )
    else:
        grid = default_detuning_grid(
            params, fixed, n_points=int(sim["grid_points"]),
            span_fwhm=float(sim["grid_span_fwhm"]),
        )
    tol = cfg["tolerances"]
    spectrum = simulate_cpt_spectrum(
        params, fixed, grid,
        method=str(sim["method"]), t_final=float(sim["t_final_s"]),
        rtol=float(tol["rtol"]), atol=float(tol["atol"]),
    )
    save_population_csv(args.out, spectrum)
    results = {
        "spectrum_csv": str(args.out),
        "n_points": int(grid.size),
        "grid_hz": [float(grid[0]), float(grid[-1])],
        "min_population": float(np.min(spectrum.values)),
        "max_population": float(np.max(spectrum.values)),
    }
    write_report(str(args.out) + ".json", "simulate-cpt", results, cfg, [])
    if args.plot:
        _save_plot(
            _plot_path(args.out), grid / 1e9, spectrum.values,
            xlabel="D detuning (GHz)", ylabel="excited-state population",
            title="simulated CPT spectrum",
        )
    return 0


def cmd_fit_cpt(args, cfg) -> int:
    spectrum = load_population_csv(args.spectrum)
    fixed = _fixed_rates(cfg)
    fit_cfg = cfg["fit"]
    report = fit_cpt(
        spectrum, fixed, _init_params(cfg),
        n_starts=int(fit_cfg["n_starts"]), seed=int(cfg["seed"]),
    )
    unc = sensitivity(
        report,
        fraction=float(fit_cfg["sensitivity_fraction"]),
        step=float(fit_cfg["sensitivity_step"]),
        strict=bool(fit_cfg["strict_sensitivity"]),
    )
    bound = dephasing_upper_bound(report, visibility_drop=float(fit_cfg["visibility_drop"]))
    p = report.params
    results = {
        "fit": {
            "omega_c_hz": p.omega_c / TWO_PI,
            "omega_d_hz": p.omega_d / TWO_PI,
            "gamma_minus_per_s": p.gamma_minus,
            "gamma_plus_per_s": p.gamma_plus,
            "t_minus_s": report.t_minus,
            "t_plus_s": report.t_plus,
            "residual_sse": report.residual,
            "dip_population": report.dip_population,
        },
        "uncertainties": {
            "omega_c_hz": unc["omega_c"] / TWO_PI,
            "omega_d_hz": unc["omega_d"] / TWO_PI,
            "gamma_minus_per_s": unc["gamma_minus"],
            "t_minus_s": unc["t_minus"],
            "t_plus_s": unc["t_plus"],
        },
        "dephasing_upper_bound_s": bound,
        "flags": report.flags,
    }
    write_report(args.out, "fit-cpt", results, cfg, [args.spectrum])
    if args.plot:
        from .cpt import _rho33_direct

        model = _rho33_direct(p, fixed, spectrum.detunings_d)
        _save_plot(
            _plot_path(args.out), spectrum.detunings_d / 1e9, spectrum.values,
            y_fit=model, xlabel="D detuning (GHz)",
            ylabel="excited-state population", title="CPT fit",
        )
    return 0


def cmd_reduce_scans(args, cfg) -> int:
    scfg = cfg["scans"]
    f_sat = float(require(cfg, "scans", "f_sat_counts_per_s"))
    scans = [load_scan_csv(p) for p in args.scans]
    flog = load_frequency_log_csv(args.log)
    reduced = reduce_scans(
        scans, flog, f_sat,
        min_rate=float(scfg["min_rate_counts_per_s"]),
        background=float(scfg["background_counts_per_s"]),
        reference=int(scfg["reference_scan"]),
        merge_directions=bool(scfg["merge_directions"]),
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for direction, bundle in reduced.items():
        csv_path = out_dir / f"reduced_{direction}.csv"
        save_population_csv(csv_path, bundle["spectrum"])
        write_report(
            out_dir / f"reduced_{direction}.json", "reduce-scans",
            bundle["sidecar"], cfg, list(args.scans) + [args.log],
        )
        written.append(str(csv_path))
        if args.plot:
            _save_plot(
                str(csv_path).replace(".csv", ".svg"),
                bundle["spectrum"].detunings_d / 1e9, bundle["spectrum"].values,
                xlabel="detuning (GHz)", ylabel="population",
                title=f"reduced spectrum ({direction})",
            )
    print("\n".join(written))
    return 0


def cmd_thermal_model(args, cfg) -> int:
    series = load_thermal_csv(args.series)
    families = {
        "linear": ModelFamily("linear"),
        "cubic": ModelFamily("cubic"),
        "cubic_anchored": ModelFamily("cubic_anchored"),
    }
    r2 = {name: incremental_r2(series, fam) for name, fam in families.items()}
    cutoff = detect_cutoff(r2["linear"], cutoff_temperatures(series))
    n_fit = cfg["thermal"]["fit_points"]
    if n_fit is None:
        if cutoff is not None:
            n_fit = int(np.searchsorted(series.temperatures, cutoff)) + 1
        else:
            n_fit = len(series)
    n_fit = int(n_fit)
    fits = {name: fit_thermal_model(series, fam, n_fit) for name, fam in families.items()}
    errors = {
        name: {
            "first_n_hz": total_abs_error(series, f, range(n_fit)),
            "all_hz": total_abs_error(series, f, range(len(series))),
        }
        for name, f in fits.items()
    }
    results = {
        "cutoff_temperature_k": cutoff,
        "fit_points": n_fit,
        "incremental_r2": {k: list(v) for k, v in r2.items()},
        "r2_n_points": list(range(3, len(series) + 1)),
        "fits": {
            k: {"params": f.params, "param_errors": f.param_errors, "r_squared": f.r_squared}
            for k, f in fits.items()
        },
        "total_abs_error": errors,
    }
    write_report(args.out, "thermal-model", results, cfg, [args.series])
    if args.plot:
        t = series.temperatures
        _save_plot(
            _plot_path(args.out), t, series.linewidths / 1e6,
            y_fit=fits["linear"].evaluate(t) / 1e6,
            xlabel="temperature (K)", ylabel="linewidth (MHz)",
            title="thermal linewidth (linear fit overlay)",
        )
    return 0


_BROADENING_KEYS = (
    "tau_se", "p_c", "p_d", "p_sat",
    "gamma_c_measured", "gamma_d_measured", "branch_ratio",
)


def cmd_d_broadening(args, cfg) -> int:
    with open(args.inputs) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadInput(f"{args.inputs}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise BadInput(f"{args.inputs}: top level must be a JSON object")
    unknown = set(raw) - set(_BROADENING_KEYS) - {"uncertainties"}
    if unknown:
        raise BadInput(f"{args.inputs}: unknown fields {sorted(unknown)}")
    missing = {"tau_se", "p_c", "p_d", "p_sat", "gamma_c_measured", "gamma_d_measured"} - set(raw)
    if missing:
        raise BadInput(f"{args.inputs}: missing fields {sorted(missing)}")
    inputs = BroadeningInputs(**raw)
    report = phononic_component(inputs, grouping=str(cfg["broadening"]["grouping"]))
    results = {
        "gamma_c_hom_hz": report.gamma_c_hom,
        "gamma_d_hom_hz": report.gamma_d_hom,
        "gamma_c_pow_hz": report.gamma_c_pow,
        "gamma_d_pow_hz": report.gamma_d_pow,
        "gamma_diff_hz": report.gamma_diff,
        "gamma_d_phon_hz": report.gamma_d_phon,
        "t_minus_d_s": report.t_minus_d,
        "grouping": report.grouping,
        "assumptions": list(report.assumptions),
        "uncertainties": report.uncertainties,
    }
    write_report(args.out, "d-broadening", results, cfg, [args.inputs])
    return 0


def _load_curve_csv(path) -> Curve1D:
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(row for row in fh if not row.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None:
            raise BadInput(f"{path}: empty file")
        cols = [h.strip() for h in header]
        if cols[:2] != ["x", "y"] or (len(cols) > 2 and cols[2] != "y_err"):
            raise BadInput(f"{path}: line 1: header must be x,y[,y_err]")
        has_err = len(cols) > 2
        x, y, e = [], [], []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x.append(float(row[0]))
                y.append(float(row[1]))
                if has_err:
                    e.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise BadInput(f"{path}: line {i}: {exc}") from exc
    return Curve1D(np.array(x), np.array(y), np.array(e) if has_err else None)


def cmd_fit_line(args, cfg) -> int:
    data = _load_curve_csv(args.curve)
    model = args.model
    if model == "gaussian-prefit":
        center = fit_gaussian_prefit(data)
        write_report(args.out, "fit-line", {"model": model, "center": center}, cfg, [args.curve])
        if args.plot:
            _save_plot(_plot_path(args.out), data.x, data.y, xlabel="x", ylabel="y",
                       title=f"gaussian prefit center = {center:.6g}")
        return 0
    fitters = {
        "lorentzian": fit_lorentzian,
        "double-lorentzian": fit_double_lorentzian,
        "exponential": fit_exponential_lifetime,
        "saturation": fit_saturation,
        "g2": fit_g2,
    }
    result = fitters[model](data)
    results = {
        "model": result.model,
        "params": result.params,
        "param_errors": result.param_errors,
        "r_squared": result.r_squared,
        "fwhm": result.fwhm,
        "covariance": result.covariance,
        "flags": result.flags,
    }
    write_report(args.out, "fit-line", results, cfg, [args.curve])
    if args.plot:
        _save_plot(_plot_path(args.out), data.x, data.y, y_fit=result.evaluate(data.x),
                   xlabel="x", ylabel="y", title=f"{model} fit")
    return 0


def _run_manifest_entry(argv):
    return main(list(argv))


def cmd_batch(args, cfg) -> int:
    with open(args.manifest) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadInput(f"{args.manifest}: line {exc.lineno}: {exc.msg}") from exc
    entries = manifest.get("entries") if isinstance(manifest, dict) else None
    if not isinstance(entries, list) or not entries:
        raise BadInput(f"{args.manifest}: expected an object with a non-empty 'entries' list")
    argvs = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or not isinstance(entry.get("argv"), list):
            raise BadInput(f"{args.manifest}: entry {i} must be an object with an 'argv' list")
        argv = [str(a) for a in entry["argv"]]
        if "batch" in argv[:3]:
            raise BadInput(f"{args.manifest}: entry {i}: nested batch is not allowed")
        argvs.append(argv)
    jobs = max(1, int(args.jobs))
    codes = []
    if jobs == 1:
        for argv in argvs:
            codes.append(_run_manifest_entry(argv))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_run_manifest_entry, argvs))
    for i, code in enumerate(codes):
        print(f"entry {i}: exit {code}")
    return max(codes)


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cptkit",
        description="CPT simulation, fitting and spectroscopy reduction toolkit",
    )
    p.add_argument("--config", help="JSON configuration file (merged over defaults)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel jobs for batch")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate-cpt", help="simulate a CPT dip spectrum")
    sp.add_argument("--out", required=True, help="output spectrum CSV")
    sp.set_defaults(func=cmd_simulate_cpt)

    sp = sub.add_parser("fit-cpt", help="fit a population spectrum")
    sp.add_argument("--spectrum", required=True, help="input CSV (detuning_hz,population)")
    sp.add_argument("--out", required=True, help="output report JSON")
    sp.set_defaults(func=cmd_fit_cpt)

    sp = sub.add_parser("reduce-scans", help="reduce raw scans to a population spectrum")
    sp.add_argument("scans", nargs="+", help="scan CSV files")
    sp.add_argument("--log", required=True, help="frequency log CSV")
    sp.add_argument("--out-dir", required=True, help="output directory")
    sp.set_defaults(func=cmd_reduce_scans)

    sp = sub.add_parser("thermal-model", help="linewidth vs temperature model selection")
    sp.add_argument("--series", required=True, help="CSV temperature_K,linewidth_MHz,error_MHz")
    sp.add_argument("--out", required=True, help="output report JSON")
    sp.set_defaults(func=cmd_thermal_model)

    sp = sub.add_parser("d-broadening", help="D-linewidth decomposition")
    sp.add_argument("--inputs", required=True, help="BroadeningInputs JSON")
    sp.add_argument("--out", required=True, help="output report JSON")
    sp.set_defaults(func=cmd_d_broadening)

    sp = sub.add_parser("fit-line", help="fit a standard line shape to a curve")
    sp.add_argument("--curve", required=True, help="CSV with header x,y[,y_err]")
    sp.add_argument("--model", required=True, choices=_LINE_MODELS)
    sp.add_argument("--out", required=True, help="output report JSON")
    sp.set_defaults(func=cmd_fit_line)

    sp = sub.add_parser("batch", help="run manifest entries, optionally in parallel")
    sp.add_argument("--manifest", required=True, help="JSON manifest with an 'entries' list")
    sp.set_defaults(func=cmd_batch)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        return args.func(args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
