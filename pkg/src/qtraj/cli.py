"""Command-line surface: kernel, simulate, analyze, sweep.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or file-format failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import config_from_dict, load_config, set_config_value
from .detection import matched_kernel
from .dynamics.analysis import coherence_trace, output_flux
from .ensemble import build_model, run_ensemble, sweep
from .errors import ConfigurationError, FormatError, NumericalError, QtrajError
from .io_formats import (
    write_bundle,
    write_kernel_csv,
    write_summary_csv,
    write_traces_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qtraj",
        description="Itinerant microwave photon counting: trajectory simulation and matched-filter detection.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", help="output directory (overrides outputs.directory)")
        p.add_argument("--seed", type=int, help="master seed override (u64)")
        p.add_argument("--traj", type=int, help="trajectories per hypothesis override")
        p.add_argument("--workers", type=int, help="worker count override")

    p_kernel = sub.add_parser("kernel", help="compute and write the matched filter kernel")
    common(p_kernel)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo study: run ensembles and decide 0 vs 1")
    common(p_sim)

    p_an = sub.add_parser("analyze", help="unconditional flux or coherence traces")
    common(p_an)
    p_an.add_argument("--mode", choices=("flux", "coherence"), required=True)

    p_sw = sub.add_parser("sweep", help="repeat simulate over a parameter list")
    common(p_sw)
    p_sw.add_argument("--param", required=True, help="dotted config path, e.g. units.0.delta2")
    p_sw.add_argument("--values", required=True, help="comma-separated numbers")
    return ap


def _load_cfg(args):
    d = load_config(args.config)
    if args.out:
        d["outputs"]["directory"] = args.out
    if args.seed is not None:
        d["ensemble"]["master_seed"] = args.seed
    if args.traj is not None:
        d["ensemble"]["n_traj"] = args.traj
    if args.workers is not None:
        d["ensemble"]["parallelism"] = args.workers
    return config_from_dict(d)


def cmd_kernel(args) -> int:
    cfg = _load_cfg(args)
    model = build_model(cfg)
    kernel = matched_kernel(
        model,
        cfg.grid,
        variant=cfg.kernel_variant,
        n_traj=cfg.kernel_estimator_M,
        smooth_width=cfg.kernel_smooth_width if model.n_units == 2 else 0.0,
        workers=cfg.parallelism or None,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_kernel_csv(out / "kernel.csv", cfg.grid, kernel.h)
    for lab in sorted(kernel.h):
        print(f"kernel_energy[{lab}]={kernel.energy(lab):.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    report = run_ensemble(cfg)
    write_bundle(cfg.out_dir, report)
    snr_txt = f"{report.stats.snr:.6g}" if report.stats.snr is not None else "nan"
    print(
        f"SNR={snr_txt} F={report.stats.F:.6g} S_th={report.stats.s_th:.6g} "
        f"flagged={report.flagged}"
    )
    print(f"runtime_seconds={report.runtime_seconds:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.parallelism or None
    if args.mode == "coherence":
        d = cfg.raw
        if d["source"]["initial"] != "superposition":
            d = set_config_value(d, "source.initial", "superposition")
            cfg = config_from_dict(d)
        model = build_model(cfg)
        res = coherence_trace(
            model, cfg.grid, n_traj=cfg.kernel_estimator_M,
            master_seed=cfg.master_seed, workers=workers,
        )
        write_traces_csv(
            out / "traces.csv",
            cfg.grid.points(),
            res.coherence.values,
            res.reference.values,
        )
        print(f"retained_coherence={res.retained_fraction:.6g}")
        if res.fraction_stderr:
            print(f"retained_coherence_stderr={res.fraction_stderr:.6g}", file=sys.stderr)
        return EXIT_OK
    model = build_model(cfg)
    n = {"fock0": 0, "fock1": 1}.get(cfg.source.initial)
    if n is None:
        raise ConfigurationError("flux mode needs source.initial of fock0 or fock1")
    res = output_flux(
        model, n, cfg.grid, n_traj=cfg.kernel_estimator_M,
        master_seed=cfg.master_seed, workers=workers,
    )
    write_traces_csv(
        out / "traces.csv",
        cfg.grid.points(),
        np.asarray(res.flux_j.values, dtype=float),
        np.asarray(res.reference.values, dtype=float),
    )
    print(f"total_emitted={res.total_emitted():.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    if values:
        t0 = time.perf_counter()
        for value, report in sweep(cfg, args.param, values):
            sub = out / f"value_{len(rows)}"
            write_bundle(sub, report)
            rows.append(
                (value, report.stats.snr, report.stats.F, report.stats.s_th,
                 report.runtime_seconds)
            )
        print(f"sweep_runtime_seconds={time.perf_counter() - t0:.3f}", file=sys.stderr)
    write_summary_csv(out / "summary.csv", rows)
    return EXIT_OK


_COMMANDS = {
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, FormatError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except QtrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
