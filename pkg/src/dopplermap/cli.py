"""Command-line experiment runner.

Subcommands cover the pipeline stages (``simulate``, ``transfer``,
``invert``, ``analyze``), batch sweeps over experiment axes (``sweep``)
and the acceptance suite (``verify``).  All stages are driven by one YAML
configuration document; sweeps expand list-valued axes into a Cartesian
product of runs with per-run seeds, shared transfer-matrix caching and a
deterministic summary table.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .inverse import save_result, solve_pipeline
from .kernels import Kernel2D
from .mapping import (
    map_plot_data,
    map_to_csv,
    robust_beamwidth_report,
    sidelobe_period,
    to_source_map,
)
from .scenario import Medium, analysis_band, doppler_band, scenario_from_config
from .serialization import write_json
from .simulate import (
    NoiseSpec,
    SignalSpec,
    add_noise,
    add_stabilization_noise,
    load_recording,
    record_with_positions,
    save_recording,
)
from .spectral import BinSelection, Window, select_bins, stft_matrix
from .transfer import QuadratureSpec, assemble, load_transfer, save_transfer

PROFILE_DEFAULTS = {
    "desk": {"spacing": 0.1, "n_mics": 32, "arms": 4},
    "paper": {"spacing": 0.05, "n_mics": 112, "arms": 7},
}


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return cfg


def _signal_from_config(cfg: dict) -> SignalSpec:
    scfg = cfg.get("signal", {})
    amp = scfg.get("amplitude", [1.0, 0.0])
    if isinstance(amp, (int, float)):
        amp = [float(amp), 0.0]
    return SignalSpec(f0=float(scfg.get("f0", 1000.0)), amplitude=complex(amp[0], amp[1]))


def _window_from_config(cfg: dict) -> Window:
    wcfg = cfg.get("window", {})
    fs = float(cfg.get("sampling", {}).get("fs", 10000.0))
    return Window(
        kind=wcfg.get("kind", "hanning"),
        T_g=float(wcfg.get("T_g", 1.0)),
        fs=fs,
        center=float(wcfg.get("center", 0.0)),
    )


def _selection_from_config(cfg: dict, scenario, window: Window) -> BinSelection:
    sel = cfg.get("selection", {})
    f0 = _signal_from_config(cfg).f0
    band = sel.get("band")
    if band is None:
        factors = tuple(sel.get("band_factors", (0.92, 1.12)))
        band = analysis_band(f0, abs(scenario.motion.v_s), scenario.medium, factors)
    return select_bins(
        strategy=sel.get("strategy", "random"),
        band=tuple(float(b) for b in band),
        window=window,
        m_per_mic=int(sel.get("M", 5)),
        n_mics=scenario.array.n_mics,
        seed=int(sel.get("seed", 0)),
        f0=f0,
    )


def _kernel_from_config(cfg: dict) -> Kernel2D:
    ground = cfg.get("ground", {})
    if ground.get("enabled", False):
        return Kernel2D("half_plane", float(ground.get("z", -1.0)))
    return Kernel2D("free_field")


def _quad_from_config(cfg: dict) -> QuadratureSpec:
    q = cfg.get("quadrature", {})
    return QuadratureSpec(
        rel_tol=float(q.get("rel_tol", 1e-6)),
        abs_tol=float(q.get("abs_tol", 1e-12)),
        max_subdivisions=int(q.get("max_subdivisions", 4000)),
        truncation_db=float(q.get("truncation_db", 80.0)),
        truncation_delta_f=q.get("truncation_delta_f"),
    )


def _simulate_recording(cfg: dict, scenario, seed_override=None):
    signal = _signal_from_config(cfg)
    sampling = cfg.get("sampling", {})
    fs = float(sampling.get("fs", 10000.0))
    t_span = tuple(float(t) for t in sampling.get("t_span", (-0.6, 0.6)))
    rec = record_with_positions(scenario, signal, fs, t_span)

    ncfg = cfg.get("noise", {})
    snr = ncfg.get("snr_db")
    if snr is not None:
        band = ncfg.get("band")
        if band is None:
            f_minus, f_plus = doppler_band(
                signal.f0, abs(scenario.motion.v_s), scenario.medium
            )
            band = (0.8 * f_minus, min(1.2 * f_plus, 0.45 * fs))
        seed = int(ncfg.get("seed", 0)) if seed_override is None else seed_override
        rec = add_noise(
            rec,
            NoiseSpec(
                snr_db=float(snr),
                source_position=tuple(ncfg.get("position", (20.0, 10.0, 1.0))),
                band=tuple(float(b) for b in band),
                seed=seed,
            ),
        )
    stab = cfg.get("stabilization", {})
    if stab.get("snr_db", 80.0) is not None:
        seed = int(stab.get("seed", 0)) if seed_override is None else seed_override
        rec = add_stabilization_noise(rec, float(stab.get("snr_db", 80.0)), seed=seed)
    return rec


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg)
    rec = _simulate_recording(cfg, scenario, seed_override=args.seed)
    save_recording(args.out, rec)
    print(f"wrote {args.out}.json / .bin ({rec.n_channels} channels, {rec.n_samples} samples)")
    if args.stft_out:
        window = _window_from_config(cfg)
        centers, freqs, coeffs = stft_matrix(rec, window, window.n_samples // 2)
        mags = np.abs(coeffs[:, 0, :])
        with open(args.stft_out, "w", encoding="utf-8") as fh:
            fh.write("# rows: frame centers (s); cols: bin frequencies (Hz); |coeff|\n")
            fh.write("t," + ",".join(repr(float(f)) for f in freqs) + "\n")
            for t, row in zip(centers, mags):
                fh.write(f"{float(t)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
        print(f"wrote {args.stft_out}")
    return 0


def cmd_transfer(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg)
    window = _window_from_config(cfg)
    selection = _selection_from_config(cfg, scenario, window)
    matrix = assemble(
        scenario,
        window,
        _kernel_from_config(cfg),
        selection,
        _signal_from_config(cfg).f0,
        quad=_quad_from_config(cfg),
        cache_dir=args.cache,
        progress=(lambda done, total: print(f"  row {done}/{total}", end="\r"))
        if args.verbose
        else None,
    )
    save_transfer(args.save_transfer, matrix)
    print(f"\nwrote {args.save_transfer}.json / .bin (shape {matrix.shape})")
    return 0


def cmd_invert(args) -> int:
    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg)
    window = _window_from_config(cfg)
    selection = _selection_from_config(cfg, scenario, window)
    rec = load_recording(args.recording)
    if args.load_transfer:
        matrix = load_transfer(args.load_transfer)
    else:
        matrix = assemble(
            scenario,
            window,
            _kernel_from_config(cfg),
            selection,
            _signal_from_config(cfg).f0,
            quad=_quad_from_config(cfg),
            cache_dir=args.cache,
        )
    inv_cfg = cfg.get("inversion", {})
    result = solve_pipeline(
        matrix,
        rec,
        window,
        selection,
        lambda_floor=inv_cfg.get("lambda_floor"),
    )
    out = Path(args.out)
    save_result(out, result)
    write_json(out / "selection.json", selection.describe())
    print(
        f"wrote {out}/result.json (lambda {result.lam:.4e}, residual "
        f"{result.residual_norm:.4e})"
    )
    return 0


def cmd_analyze(args) -> int:
    from .inverse import load_result

    cfg = load_config(args.config)
    scenario = scenario_from_config(cfg)
    result = load_result(args.result)
    source_map = to_source_map(result, scenario.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    map_to_csv(out / "map.csv", source_map)
    true_xy = (scenario.source_position[0], scenario.source_position[2])
    report = robust_beamwidth_report(source_map, true_xy)
    period = sidelobe_period(source_map, "x")
    write_json(out / "beamwidth.json", {**report.describe(), "sidelobe_period": period})
    if args.plot_data:
        map_plot_data(out / "map.plotdata", source_map)
    print(f"wrote {out}/map.csv and beamwidth.json (peak {report.peak_xy})")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _expand_plan(plan: dict, profile: str) -> tuple[dict, list[dict]]:
    defaults = PROFILE_DEFAULTS[profile]
    sweep = plan.get("sweep", {})
    axes = {
        "f0": [float(v) for v in sweep.get("f0", [1000.0])],
        "v_s": [float(v) for v in sweep.get("v_s", [50.0])],
        "T_g": [float(v) for v in sweep.get("T_g", [1.0])],
        "M": [int(v) for v in sweep.get("M", [5])],
        "seeds": [int(v) for v in sweep.get("seeds", [0])],
        "snr_db": list(sweep.get("snr_db", [None])),
        "distance": [float(v) for v in sweep.get("distance", [4.0])],
    }
    for name, values in axes.items():
        if not values:
            raise ConfigurationError(f"sweep axis {name!r} is empty")
    strategy = sweep.get("strategy", "random")
    ground = bool(sweep.get("ground", False))

    base = {
        "medium": plan.get("medium", {"c": 343.0}),
        "grid": {
            "x_extent": 4.0,
            "z_extent": 4.0,
            "spacing": defaults["spacing"],
            "y": 0.0,
            **plan.get("grid", {}),
        },
        "array": {
            "type": "spiral",
            "n_mics": defaults["n_mics"],
            "arms": defaults["arms"],
            "diameter": 1.0,
            **plan.get("array", {}),
        },
        "ground": {"enabled": ground, "z": plan.get("ground_z", -1.0)},
        "window": {"kind": plan.get("window_kind", "hanning")},
        "sampling": plan.get("sampling", {"fs": 10000.0}),
        "stabilization": plan.get("stabilization", {"snr_db": 80.0, "seed": 0}),
        "quadrature": plan.get("quadrature", {}),
        "inversion": plan.get("inversion", {}),
    }

    runs = []
    for f0 in axes["f0"]:
        for v_s in axes["v_s"]:
            for t_g in axes["T_g"]:
                for m in axes["M"]:
                    for seed in axes["seeds"]:
                        for snr in axes["snr_db"]:
                            for dist in axes["distance"]:
                                runs.append(
                                    {
                                        "f0": f0,
                                        "v_s": v_s,
                                        "T_g": t_g,
                                        "M": m,
                                        "seed": seed,
                                        "snr_db": None if snr is None else float(snr),
                                        "distance": dist,
                                        "strategy": strategy,
                                        "ground": ground,
                                    }
                                )
    return base, runs


def _run_key(run: dict) -> str:
    snr = "inf" if run["snr_db"] is None else f"{run['snr_db']:g}"
    return (
        f"f{run['f0']:g}_v{run['v_s']:g}_Tg{run['T_g']:g}_{run['strategy']}"
        f"_M{run['M']}_seed{run['seed']}_snr{snr}_d{run['distance']:g}"
        + ("_ground" if run["ground"] else "")
    )


def _validate_runs(base: dict, runs: list[dict]) -> None:
    medium = Medium(float(base["medium"].get("c", 343.0)))
    fs = float(base["sampling"].get("fs", 10000.0))
    for run in runs:
        window = Window(base["window"]["kind"], run["T_g"], fs)
        band = analysis_band(run["f0"], run["v_s"], medium)
        from .spectral import available_bins

        avail = available_bins(band, window)
        if run["M"] > avail.size:
            raise ConfigurationError(
                f"run {_run_key(run)}: M = {run['M']} bins requested but only "
                f"{avail.size} DFT bins are available in "
                f"[{band[0]:.1f}, {band[1]:.1f}] Hz at T_g = {run['T_g']} s"
            )


def _execute_run(base: dict, run: dict, out_dir: str, cache_dir: str) -> dict:
    cfg = dict(base)
    cfg["motion"] = {"v_s": run["v_s"], "x0": 2.0}
    cfg["array"] = {**base["array"], "distance": run["distance"]}
    cfg["signal"] = {"f0": run["f0"]}
    cfg["window"] = {**base["window"], "T_g": run["T_g"]}
    cfg["selection"] = {"strategy": run["strategy"], "M": run["M"], "seed": run["seed"]}
    cfg["noise"] = {"snr_db": run["snr_db"], "seed": run["seed"]}
    cfg["stabilization"] = {**base["stabilization"], "seed": run["seed"]}

    run_dir = Path(out_dir) / "runs" / _run_key(run)
    run_dir.mkdir(parents=True, exist_ok=True)
    row = dict(run)
    try:
        scenario = scenario_from_config(cfg)
        window = _window_from_config(cfg)
        selection = _selection_from_config(cfg, scenario, window)
        rec = _simulate_recording(cfg, scenario, seed_override=run["seed"])
        matrix = assemble(
            scenario,
            window,
            _kernel_from_config(cfg),
            selection,
            run["f0"],
            quad=_quad_from_config(cfg),
            cache_dir=cache_dir,
        )
        result = solve_pipeline(
            matrix, rec, window, selection,
            lambda_floor=cfg.get("inversion", {}).get("lambda_floor"),
        )
        source_map = to_source_map(result, scenario.grid)
        true_xy = (scenario.source_position[0], scenario.source_position[2])
        report = robust_beamwidth_report(source_map, true_xy)
        period = sidelobe_period(source_map, "x")

        write_json(run_dir / "recording.json", {
            "fs": rec.fs, "t_start": rec.t_start, "n_channels": rec.n_channels,
            "n_samples": rec.n_samples, "metadata": rec.metadata,
        })
        write_json(run_dir / "selection.json", selection.describe())
        write_json(run_dir / "transfer.json", {"hashes": matrix.hashes, "shape": list(matrix.shape)})
        save_result(run_dir, result)
        map_to_csv(run_dir / "map.csv", source_map)
        write_json(run_dir / "beamwidth.json", {**report.describe(), "sidelobe_period": period})

        row.update(
            status="ok",
            lam=result.lam,
            displacement=report.displacement,
            h_bw=report.horizontal_bw,
            v_bw=report.vertical_bw,
            period=period,
        )
    except Exception as exc:
        row.update(status=f"error: {type(exc).__name__}: {exc}", lam=None,
                   displacement=None, h_bw=None, v_bw=None, period=None)
    return row


_SUMMARY_COLUMNS = [
    "f0", "v_s", "T_g", "strategy", "M", "seed", "snr_db", "distance", "ground",
    "lam", "displacement", "h_bw", "v_bw", "period", "status",
]


def run_plan(plan: dict, out_dir, jobs: int = 1, profile: str = "desk") -> list[dict]:
    """Execute a sweep plan; returns summary rows (also written to summary.csv)."""
    base, runs = _expand_plan(plan, profile)
    _validate_runs(base, runs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "cache"
    cache.mkdir(exist_ok=True)
    print(f"plan expands to {len(runs)} runs")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_execute_run, [base] * len(runs), runs,
                                 [str(out)] * len(runs), [str(cache)] * len(runs)))
    else:
        rows = [_execute_run(base, run, str(out), str(cache)) for run in runs]

    rows.sort(key=lambda r: _run_key(r))
    with open(out / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(_SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row.get(c)) for c in _SUMMARY_COLUMNS) + "\n")
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value).replace(",", ";")


def cmd_sweep(args) -> int:
    plan = load_config(args.plan)
    rows = run_plan(plan, args.out, jobs=args.jobs, profile=args.profile)
    failed = [r for r in rows if r["status"] != "ok"]
    for row in failed:
        print(f"FAILED { _run_key(row) }: {row['status']}", file=sys.stderr)
    print(f"wrote {args.out}/summary.csv ({len(rows)} runs, {len(failed)} failed)")
    return 1 if failed else 0


def cmd_verify(args) -> int:
    from .verification import run_checks, summary_lines

    names = args.only.split(",") if args.only else None
    results = run_checks(names)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify_summary.csv").write_text(summary_lines(results), encoding="utf-8")
        print(f"wrote {out}/verify_summary.csv")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopplermap",
        description="Frequency-domain localization of uniformly moving tonal sources",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render array recordings for a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output stem for .json/.bin")
    p.add_argument("--seed", type=int, default=None, help="override noise seeds")
    p.add_argument("--stft-out", default=None, help="also dump a raw STFT magnitude matrix")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("transfer", help="assemble and save the transfer matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--save-transfer", required=True, help="output stem for .json/.bin")
    p.add_argument("--cache", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("invert", help="solve for source amplitudes from a recording")
    p.add_argument("--config", required=True)
    p.add_argument("--recording", required=True, help="recording stem (from simulate)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--load-transfer", default=None, help="reuse a saved transfer matrix")
    p.add_argument("--cache", default=None)
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("analyze", help="map, peak and beamwidth from a result")
    p.add_argument("--config", required=True)
    p.add_argument("--result", required=True, help="result directory (from invert)")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data", action="store_true", help="emit gnuplot matrices")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("sweep", help="run a batch plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--only", default=None, help="comma-separated check names")
    p.add_argument("--out", default=None, help="write verify_summary.csv here")
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
