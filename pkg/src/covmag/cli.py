"""Command-line front end: ``covmag <subcommand> --config run.yaml``.

Each run writes ``summary.json`` (effective config, estimates, oracle values,
consistency checks) and, with ``--format csv``, ``shots.csv`` and
``sweep.csv``. With ``--format json`` the tables are embedded in
``summary.json`` instead. All files are written only after the run finished.

CSV columns:

* shots.csv: shot, tag, photons, seed_index, point
* sweep.csv: parameter value, value, err, oracle (plus protocol extras)
* sensitivity-curve sweep.csv: T, then one sigma_B column per curve
* xy-spectrum sweep.csv: tau, n_pulses, signal, signal_propagator
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import carbon13 as c13
from . import io as cio
from . import metrology
from . import protocols as P
from . import selftest as st
from .config import PROTOCOLS, ConfigError, ExperimentConfig, dump_config, load_config, parse_config

OUT_DIR_ENV = "COVMAG_OUT_DIR"
log = logging.getLogger("covmag")


def _check(cid, value, oracle, err, k=3.0):
    if not (np.isfinite(err) and err > 0):
        return {"id": cid, "passed": None, "detail": "no error estimate"}
    z = abs(value - oracle) / err
    return {"id": cid, "passed": bool(z <= k), "detail": f"|value - oracle| = {z:.2f} sigma"}


def _scalar_run(cfg: ExperimentConfig, threads: int):
    """Run a single-point protocol; returns (value, err, oracle, summary, shots)."""
    seq = cfg.sequence.build()
    sig = cfg.signal.build(seq)
    m = cfg.readout.build()
    deco = cfg.decoherence.build()
    seed = cfg.master_seed
    if cfg.protocol == "phase-cycle":
        r = P.run_phase_cycle(sig, seq, m, deco, cfg.shots, seed, threads, cfg.block_size,
                              n_resamples=cfg.n_resamples)
        return r.cov, r.stderr, r.oracle_cov, r.summary(), r.shots
    if cfg.protocol == "c13-cycle":
        h = cfg.carbon.build()
        tau1 = cfg.carbon.tau1 or c13.first_resonance_tau(h)
        n_flip = cfg.carbon.n_flip or c13.flip_pulse_count(h, tau1)
        tau0 = cfg.carbon.tau0 or 4 * math.pi / h.omega_L
        r = P.run_c13_phase_cycle(sig, seq, m, deco, h, tau0, tau1, n_flip, cfg.shots, seed, threads,
                                  cfg.block_size, n_resamples=cfg.n_resamples,
                                  force_flip=cfg.carbon.force_flip,
                                  flip_probability=cfg.carbon.flip_probability)
        s = r.summary()
        s.update(tau0=tau0, tau1=tau1, n_flip=n_flip)
        return r.cov, r.stderr, r.oracle_cov, s, r.shots
    if cfg.protocol == "bell-covar":
        r = P.run_bell_covariance(sig, seq, m, deco, cfg.coupling.build(), cfg.shots, seed,
                                  cfg.contrast, threads, n_resamples=cfg.n_resamples)
        return r.r, r.bootstrap_err, r.oracle_r, r.summary(), r.shots
    raise ConfigError(f"protocol {cfg.protocol!r} does not support sweeps")


def _with_point(shots, j):
    shots.point = np.full(shots.photons.shape[0], j, dtype=np.int32)
    return shots


def execute(cfg: ExperimentConfig, threads: int = 1):
    """Run ``cfg``; returns ``(summary, shots or None, (columns, rows) or None)``."""
    summary = {"protocol": cfg.protocol, "config": dump_config(cfg)}
    checks = []
    shots = None
    table = None
    p = cfg.protocol
    if p in ("phase-cycle", "c13-cycle", "bell-covar"):
        if cfg.sweep is None:
            v, e, o, s, shots = _scalar_run(cfg, threads)
            summary["result"] = s
            checks.append(_check("estimate_vs_oracle", v, o, e))
        else:
            rows, parts = [], []
            for j, x in enumerate(cfg.sweep.grid):
                v, e, o, _, sh = _scalar_run(cfg.with_value(cfg.sweep.parameter, x), threads)
                rows.append((x, v, e, o))
                parts.append(_with_point(sh, j))
                checks.append(_check(f"estimate_vs_oracle/{j}", v, o, e))
            shots = P.ShotTable.concat(parts)
            table = ((cfg.sweep.parameter, "value", "err", "oracle"), rows)
            summary["result"] = {"points": [dict(zip(table[0], r)) for r in rows]}
    elif p == "tppi-fidelity":
        taus = np.linspace(0.0, cfg.tppi.tau_max, cfg.tppi.n_points)
        rep = P.run_tppi_fidelity(cfg.readout.build(), cfg.decoherence.build(), cfg.coupling.build(),
                                  2 * math.pi * cfg.tppi.f_tppi_hz, taus, cfg.tppi.p_nv_minus,
                                  None if cfg.tppi.exact else cfg.shots, cfg.master_seed, threads)
        summary["result"] = rep.summary()
        summary["result"]["decoherence_forms"] = _forms(cfg)
        checks.append({"id": "bound_below_true", "passed": bool(rep.F_bound <= rep.F_true + 0.05),
                       "detail": f"F_bound {rep.F_bound:.4f}, F_true {rep.F_true:.4f}"})
        sw = rep.sweep
        table = (("phi_tppi", "tau", "contrast", "err", "expected"),
                 list(zip(sw.x, taus, sw.value, sw.err, sw.oracle)))
        shots = sw.shots if len(sw.shots.photons) else None
    elif p in ("two-time-swap", "two-time-overlap"):
        seq = cfg.sequence.build()
        args = (cfg.signal.build(seq), seq, cfg.two_time.delays, cfg.readout.build(),
                cfg.decoherence.build(), cfg.coupling.build(), cfg.shots, cfg.master_seed, threads)
        if p == "two-time-swap":
            res = P.run_two_time_swap(*args, same_window=cfg.two_time.same_window,
                                      opposite=cfg.two_time.opposite)
        else:
            res = P.run_two_time_overlap(*args)
        table = ((res.x_name, "value", "err", "oracle"),
                 list(zip(res.x, res.value, res.err, res.oracle)))
        summary["result"] = res.summary()
        for j, (v, e, o) in enumerate(zip(res.value, res.err, res.oracle)):
            checks.append(_check(f"estimate_vs_oracle/{j}", v, o, e))
        shots = res.shots
    elif p == "sensitivity-curve":
        s = cfg.sensitivity
        T = np.logspace(math.log10(s.T_min), math.log10(s.T_max), s.n_points)
        curves = metrology.default_curves(s.sigma_R_conventional, s.sigma_R_scc)
        out = metrology.sensitivity_curves(T, s.t, s.t_e, s.T2, curves)
        labels = [c.label for c in curves]
        table = (("T",) + tuple(labels), list(zip(T, *[out[k] for k in labels])))
        ent = out["entangled_conventional"]
        ok = all(np.all(~np.isfinite(out[k]) | (np.isfinite(ent) & (ent <= out[k]))) for k in labels[1:])
        checks.append({"id": "entangled_conventional_lowest", "passed": bool(ok), "detail": ""})
        summary["result"] = {"curves": [c.__dict__ for c in curves]}
    elif p == "xy-spectrum":
        h = cfg.carbon.build()
        taus = np.linspace(cfg.carbon.tau_min, cfg.carbon.tau_max, cfg.carbon.n_tau)
        n = cfg.carbon.n_pulses
        sig = c13.xy_signal(h, taus, n)
        prop = np.array([c13.xy_signal_propagator(h, t, n) for t in taus])
        table = (("tau", "n_pulses", "signal", "signal_propagator"),
                 list(zip(taus, [n] * len(taus), sig, prop)))
        err = float(np.max(np.abs(sig - prop)))
        checks.append({"id": "closed_form_vs_propagator", "passed": err < 1e-9, "detail": f"{err:.2e}"})
        summary["result"] = {"max_deviation": err}
    summary["checks"] = checks
    if not cfg.per_shot_output:
        shots = None
    return summary, shots, table


def _forms(cfg):
    d = cfg.decoherence.build()
    Ta = d.T2_ent_a or d.T2_a
    Tb = d.T2_ent_b or d.T2_b
    if math.isinf(Ta) or math.isinf(Tb):
        return []
    return metrology.fidelity_form_sensitivity(Ta, Tb, cfg.coupling.build().t_e)


def render(summary, shots, table, fmt: str) -> dict[str, str]:
    files = {}
    if fmt == "csv":
        if shots is not None:
            files["shots.csv"] = cio.shot_csv_text(shots)
        if table is not None:
            files["sweep.csv"] = cio.csv_text(*table)
    else:
        if table is not None:
            summary = {**summary, "table": {"columns": list(table[0]), "rows": [list(r) for r in table[1]]}}
        if shots is not None:
            files["shots.json"] = cio.json_text({
                "columns": list(cio.SHOT_COLUMNS),
                "tag_labels": list(shots.labels),
                "tag": shots.tag, "photons": shots.photons, "seed_index": shots.seed_index,
                "point": shots.point if shots.point is not None else np.zeros_like(shots.tag)})
    files["summary.json"] = cio.json_text(summary)
    return files


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covmag", description="Correlation-sensing simulations with NV pairs.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PROTOCOLS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="YAML or JSON run config")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--out-dir", type=Path,
                        help=f"output directory (default ${OUT_DIR_ENV} or ./covmag-out)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp = sub.add_parser("selftest")
    sp.add_argument("--fault", action="append", default=[], choices=("gate", "sigma_r"),
                    help=argparse.SUPPRESS)
    return ap


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.protocol != args.command:
            raise ConfigError(f"protocol: config is for {cfg.protocol!r}, not {args.command!r}")
    else:
        cfg = parse_config({"protocol": args.command})
    if args.seed is not None:
        cfg = parse_config({**dump_config(cfg), "master_seed": args.seed})
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "selftest":
        checks = st.run(args.fault)
        print(st.report(checks))
        return 0 if all(c.passed for c in checks) else 1
    try:
        cfg = _load(args)
        summary, shots, table = execute(cfg, max(1, args.threads))
        out_dir = args.out_dir or Path(os.environ.get(OUT_DIR_ENV, "covmag-out"))
        paths = cio.write_outputs(out_dir, render(summary, shots, table, args.format))
    except (ConfigError, metrology.InfeasibleBudgetError, c13.NotResonantError,
            c13.ResonanceNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    failed = [c["id"] for c in summary["checks"] if c["passed"] is False]
    for p in paths:
        print(p)
    if failed:
        print(f"warning: consistency checks failed: {', '.join(failed)}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
