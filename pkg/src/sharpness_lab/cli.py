"""Command-line front end.

    sharpness-lab <oracle|estimate|train|bias-study|invariance-check|
                   universality-demo> --config <path> [--out <dir>]
                   [--seed <u64>] [--threads <k>]

Outputs are CSV tables (plus SVG charts where a study calls for one) under
the output directory, resolved as: --out flag, then the config's output.dir,
then $SHARPNESS_LAB_OUT, then ./out. Reruns with identical config and seed
produce byte-identical CSVs.

Exit codes: 0 success, 2 config validation failure, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .config import (EstimateConfig, InvarianceConfig, OracleConfig,
                     TrainCommandConfig, UniversalityConfig, parse_config)
from .csvio import write_csv
from .errors import ConfigError, DataError, NumericalError
from .linalg import SymmetricMatrix, quadratic_form_batch, symmetric_eig
from .losses import hvp
from .losses.base import default_fd_step, hessian_for
from .measures import (SeededStream, is_rotation_invariant, is_scale_invariant)
from .optim import RunRecord, TrainResult, save_checkpoint, train
from .sharpness import (Determinant, draw_component_samples, estimate_R,
                        estimate_S, estimate_S_from_samples, measure_exact)
from .svg import Band, Series, line_chart
from .universality import (collect_hessian_probes, convergence_radius,
                           default_probe_nodes, probe_moments,
                           reconstruct_eigenvalues, reconstruct_hessian)

OUT_DIR_ENV = "SHARPNESS_LAB_OUT"

COMMANDS = ("oracle", "estimate", "train", "bias-study", "invariance-check",
            "universality-demo")


def _resolve_out_dir(cli_out: Optional[str], cfg_out: Optional[str]) -> Path:
    out = cli_out or cfg_out or os.environ.get(OUT_DIR_ENV) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_metadata(outdir: Path, command: str, payload: dict) -> None:
    doc = {"command": command, **payload}
    (outdir / "metadata.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _fmt_point(x: np.ndarray) -> str:
    return "[" + ",".join(f"{v:.6g}" for v in x) + "]"


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def run_oracle(cfg: OracleConfig, outdir: Path) -> list[str]:
    loss = cfg.loss.build()
    point = cfg.loss.point
    hessian = hessian_for(loss, point)
    spectrum = symmetric_eig(hessian)
    quad = lambda vs: quadratic_form_batch(hessian, vs)
    rows = []
    for idx, preset in enumerate(cfg.presets):
        name = type(preset).__name__.lower()
        exact = estimate = stderr = zscore = float("nan")
        try:
            exact = measure_exact(spectrum, preset)
        except NumericalError:
            pass
        try:
            est = estimate_S(quad, preset.spec(loss.dim),
                             SeededStream(cfg.seed, iteration=idx), cfg.samples)
            estimate, stderr = est.value, est.stderr
        except NumericalError:
            pass
        if math.isfinite(exact) and math.isfinite(estimate) and stderr > 0:
            zscore = abs(estimate - exact) / stderr
        rows.append((name, exact, estimate, stderr, zscore))
    path = outdir / "oracle.csv"
    write_csv(path, ("preset", "exact", "estimate", "stderr", "zscore"), rows)
    _write_metadata(outdir, "oracle", {
        "loss": cfg.loss.name, "point": _fmt_point(point),
        "samples": cfg.samples, "seed": cfg.seed,
        "eigenvalues": [float(v) for v in spectrum.eigenvalues]})
    return [str(path)]


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def run_estimate(cfg: EstimateConfig, outdir: Path) -> list[str]:
    loss = cfg.loss.build()
    point = cfg.loss.point
    spectrum = symmetric_eig(hessian_for(loss, point))
    s_exact = measure_exact(spectrum, cfg.preset)
    spec = cfg.preset.spec(loss.dim)
    rows = []
    for i, rho in enumerate(cfg.rhos):
        est = estimate_R(loss, point, spec, rho,
                         SeededStream(cfg.seed, iteration=i), cfg.samples)
        rows.append((rho, est.value, s_exact, abs(est.value - s_exact)))
    path = outdir / "estimate.csv"
    write_csv(path, ("rho", "r_hat", "s_exact", "abs_error"), rows)

    slope = None
    errs = [r[3] for r in rows]
    if len(rows) >= 2 and all(e > 0 for e in errs):
        slope = float(np.polyfit(np.log([r[0] for r in rows]), np.log(errs), 1)[0])
    notes = [] if slope is None else [f"fitted slope: {slope:.3f}"]
    chart = line_chart([Series("abs_error", [r[0] for r in rows], errs)],
                       x_label="rho", y_label="|R_rho - S|",
                       title="regularizer convergence", logx=True, logy=True,
                       notes=notes)
    svg_path = outdir / "estimate.svg"
    svg_path.write_text(chart)

    meta = {"s_exact": s_exact, "slope": slope, "samples": cfg.samples,
            "seed": cfg.seed}
    if isinstance(cfg.preset, Determinant):
        lam_min = float(np.min(spectrum.eigenvalues))
        if lam_min <= 0:
            regime = "rank-deficient"
        elif cfg.preset.half_width * math.sqrt(lam_min) >= 3.0:
            regime = "resolved"
        else:
            regime = "truncation-dominated"
        meta["truncation_regime"] = regime
    _write_metadata(outdir, "estimate", meta)
    return [str(path), str(svg_path)]


# ---------------------------------------------------------------------------
# train / bias-study
# ---------------------------------------------------------------------------


def _train_cells(cfg: TrainCommandConfig):
    lambdas = cfg.study.lambdas if cfg.study.lambdas is not None else [cfg.optimizer.lam]
    seeds = cfg.study.seeds if cfg.study.seeds is not None else [cfg.optimizer.seed]
    return [(lam, seed) for lam in lambdas for seed in seeds]


def _run_one_cell(cfg: TrainCommandConfig, lam: float, seed: int,
                  tracking) -> TrainResult:
    opt = dataclasses.replace(cfg.optimizer, lam=lam, seed=seed)
    if cfg.loss.name == "mlp":
        train_data, test_data = cfg.loss.dataset.load()
        model = cfg.loss.build_model(train_data.dim, train_data.num_classes)
        return train(model, opt, train_data=train_data, test_data=test_data,
                     tracking=tracking)
    loss = cfg.loss.build()
    return train(loss, opt, x0=cfg.loss.point, tracking=tracking)


def _map_cells(cfg: TrainCommandConfig, cells, tracking, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_one_cell, cfg, lam, seed, tracking)
                       for lam, seed in cells]
            return [f.result() for f in futures]
    return [_run_one_cell(cfg, lam, seed, tracking) for lam, seed in cells]


def run_train(cfg: TrainCommandConfig, outdir: Path, threads: int,
              config_hash: str) -> list[str]:
    cells = _train_cells(cfg)
    results = _map_cells(cfg, cells, cfg.tracking, threads)
    written = []
    for (lam, seed), result in zip(cells, results):
        stem = f"train_lam{lam:g}_seed{seed}"
        csv_path = outdir / f"{stem}.csv"
        write_csv(csv_path, RunRecord.CSV_COLUMNS, result.record.csv_rows())
        ckpt_path = outdir / f"{stem}.ckpt"
        arch = (list(cfg.loss.hidden) if cfg.loss.name == "mlp"
                else cfg.loss.name)
        save_checkpoint(ckpt_path, result.params, {
            "architecture": arch, "config_hash": config_hash,
            "seed": seed, "iteration": result.state.t})
        written += [str(csv_path), str(ckpt_path)]
    _write_metadata(outdir, "train", {
        "config_hash": config_hash, "cells": [list(c) for c in cells],
        "optimizer": cfg.optimizer.optimizer})
    return written


def run_bias_study(cfg: TrainCommandConfig, outdir: Path, threads: int,
                   config_hash: str) -> list[str]:
    cells = _train_cells(cfg)
    results = _map_cells(cfg, cells, cfg.tracking, threads)
    by_cell = dict(zip(cells, results))
    lambdas = sorted({lam for lam, _ in cells})
    seeds = sorted({seed for _, seed in cells})

    rows = []
    for lam in lambdas:
        for seed in seeds:
            for r in by_cell[(lam, seed)].record.rows:
                rows.append((lam, seed, r.epoch, r.train_loss, r.test_accuracy,
                             r.frob_sq_estimate))
    study_path = outdir / "bias_study.csv"
    write_csv(study_path, ("lambda", "seed", "epoch", "train_loss",
                           "test_accuracy", "frob_sq_estimate"), rows)

    summary_rows = []
    series, bands = [], []
    epochs = cfg.optimizer.epochs
    for i, lam in enumerate(lambdas):
        finals = [by_cell[(lam, s)].record.rows[-1] for s in seeds]
        frob = np.array([r.frob_sq_estimate for r in finals], dtype=float)
        accs = np.array([r.test_accuracy for r in finals], dtype=float)
        se = float(np.std(frob, ddof=1) / math.sqrt(len(frob))) if len(frob) > 1 else None
        summary_rows.append((lam, float(np.mean(frob)), se,
                             float(np.mean(accs)) if np.all(np.isfinite(accs)) else None,
                             float(np.min(accs)) if np.all(np.isfinite(accs)) else None))
        curve = np.array([[by_cell[(lam, s)].record.rows[e].frob_sq_estimate
                           for s in seeds] for e in range(epochs)], dtype=float)
        mean = curve.mean(axis=1)
        xs = list(range(1, epochs + 1))
        series.append(Series(f"lambda={lam:g}", xs, mean.tolist()))
        if len(seeds) > 1:
            band_se = curve.std(axis=1, ddof=1) / math.sqrt(len(seeds))
            bands.append(Band(xs, (mean - band_se).tolist(),
                              (mean + band_se).tolist(), series_index=i))
    summary_path = outdir / "bias_summary.csv"
    write_csv(summary_path, ("lambda", "final_frob_sq_mean", "final_frob_sq_se",
                             "final_test_accuracy_mean", "final_test_accuracy_min"),
              summary_rows)
    chart = line_chart(series, x_label="epoch",
                       y_label="squared Frobenius norm estimate",
                       title="curvature during training", bands=bands)
    svg_path = outdir / "bias_study.svg"
    svg_path.write_text(chart)
    _write_metadata(outdir, "bias-study", {
        "config_hash": config_hash, "lambdas": lambdas, "seeds": seeds,
        "epochs": epochs, "probes": cfg.tracking.probes,
        "subsample": cfg.tracking.subsample,
        "hidden_layers": list(cfg.loss.hidden),
        "optimizer": cfg.optimizer.optimizer,
        "rho": cfg.optimizer.rho, "n": cfg.optimizer.n_samples})
    return [str(study_path), str(summary_path), str(svg_path)]


# ---------------------------------------------------------------------------
# invariance-check
# ---------------------------------------------------------------------------


def _transforms(cfg: InvarianceConfig, dim: int) -> list[tuple[str, np.ndarray]]:
    gen = SeededStream(cfg.seed, component=1).generator()
    out = []
    if cfg.transform == "diag_rescale":
        if dim != 2:
            raise ConfigError("diag_rescale transforms are defined for dim 2")
        ks = cfg.scales if cfg.scales else list(np.exp(gen.uniform(
            np.log(0.5), np.log(2.0), size=cfg.count)))
        for k in ks:
            if k == 0:
                raise ConfigError("rescale factor must be nonzero")
            out.append((f"diag(k={k:.6g})", np.diag([k, 1.0 / k])))
    else:
        if cfg.angles is not None:
            if dim != 2:
                raise ConfigError("explicit angles require dim 2")
            for a in cfg.angles:
                c, s = math.cos(math.radians(a)), math.sin(math.radians(a))
                out.append((f"rot(theta={a:g}deg)", np.array([[c, -s], [s, c]])))
        else:
            for i in range(cfg.count):
                q, r = np.linalg.qr(gen.standard_normal((dim, dim)))
                q = q * np.sign(np.diag(r))
                if np.linalg.det(q) < 0:
                    q[:, 0] = -q[:, 0]
                out.append((f"rotation#{i}", q))
    return out


def run_invariance(cfg: InvarianceConfig, outdir: Path) -> list[str]:
    loss = cfg.loss.build()
    dim = loss.dim
    spec = cfg.preset.spec(dim)
    if cfg.mode == "coupled":
        if cfg.transform == "diag_rescale" and not all(
                is_scale_invariant(mu) for mu in spec.mus):
            raise ConfigError(
                "coupled rescaling checks need a scale-invariant measure "
                "(is_scale_invariant is false for this preset's measure)")
        if cfg.transform == "rotation" and not all(
                is_rotation_invariant(mu) for mu in spec.mus):
            raise ConfigError(
                "coupled rotation checks need a rotation-invariant measure "
                "(is_rotation_invariant is false for this preset's measure)")

    if cfg.points is not None:
        points = [np.asarray(p, dtype=float) for p in cfg.points]
        for p in points:
            if p.shape != (dim,):
                raise ConfigError(f"point {p} does not have dimension {dim}")
    else:
        gen = SeededStream(cfg.seed, component=2).generator()
        points = [gen.uniform(0.25, 2.0, size=dim) for _ in range(cfg.count)]
    transforms = _transforms(cfg, dim)

    rows = []
    for row_idx, ((tname, mat), point) in enumerate(
            (t, p) for t in transforms for p in points):
        tpoint = mat @ point
        h_x = hessian_for(loss, point)
        h_tx = hessian_for(loss, tpoint)
        s_x = s_tx = coupled = None
        if cfg.mode == "coupled":
            minv = np.linalg.inv(mat)
            batches = draw_component_samples(
                spec, SeededStream(cfg.seed, iteration=row_idx), cfg.samples)
            at_tx = estimate_S_from_samples(
                lambda vs: quadratic_form_batch(h_tx, vs), spec, batches)
            at_x = estimate_S_from_samples(
                lambda vs: quadratic_form_batch(h_x, vs), spec,
                [b.transformed(minv) for b in batches])
            s_x, s_tx = at_x.value, at_tx.value
            coupled = abs(at_tx.value - at_x.value)
        analytic = None
        try:
            exact_x = measure_exact(symmetric_eig(h_x), cfg.preset)
            exact_tx = measure_exact(symmetric_eig(h_tx), cfg.preset)
            analytic = abs(exact_x - exact_tx)
            if cfg.mode == "oracle":
                s_x, s_tx = exact_x, exact_tx
        except NumericalError:
            pass
        rows.append((tname, _fmt_point(point), s_x, s_tx, coupled, analytic))
    path = outdir / "invariance.csv"
    write_csv(path, ("transform", "point", "s_at_x", "s_at_transformed_x",
                     "coupled_abs_diff", "analytic_abs_diff"), rows)
    _write_metadata(outdir, "invariance-check", {
        "loss": cfg.loss.name, "preset": type(cfg.preset).__name__.lower(),
        "mode": cfg.mode, "transform": cfg.transform,
        "samples": cfg.samples, "seed": cfg.seed})
    return [str(path)]


# ---------------------------------------------------------------------------
# universality-demo
# ---------------------------------------------------------------------------


def run_universality(cfg: UniversalityConfig, outdir: Path) -> list[str]:
    if cfg.matrix is not None:
        matrix = SymmetricMatrix(cfg.matrix)
        quad_single = lambda v: float(v @ matrix.entries @ v)
    else:
        loss = cfg.loss.build()
        point = cfg.loss.point
        matrix = hessian_for(loss, point)
        eps_fd = default_fd_step(point)
        quad_single = lambda v: float(v @ hvp(loss, point, v, eps_fd))
    d = matrix.dim
    spectrum = symmetric_eig(matrix)
    true_eigs = spectrum.eigenvalues

    eps = 1.0 / (float(np.max(np.abs(true_eigs), initial=0.0)) + 1.0)
    nodes = default_probe_nodes(eps, d)
    recon_eigs = reconstruct_eigenvalues(probe_moments(nodes, spectrum=spectrum))

    rows = []
    for i in range(d):
        rows.append(("eigenvalue", str(i), float(true_eigs[i]),
                     float(recon_eigs[i]), abs(float(true_eigs[i] - recon_eigs[i]))))
    eig_err = float(np.max(np.abs(true_eigs - recon_eigs), initial=0.0))

    probes = collect_hessian_probes(quad_single, d)
    recon_h = reconstruct_hessian(probes)
    h_err = 0.0
    for i in range(d):
        for j in range(i, d):
            err = abs(float(matrix.entries[i, j] - recon_h.entries[i, j]))
            h_err = max(h_err, err)
            rows.append(("hessian_entry", f"{i},{j}", float(matrix.entries[i, j]),
                         float(recon_h.entries[i, j]), err))

    mc_err = None
    if cfg.mc_samples > 0:
        mc_nodes = default_probe_nodes(eps, d, fraction=0.45)
        probe = probe_moments(mc_nodes,
                              quad=lambda vs: quadratic_form_batch(matrix, vs),
                              dim=d, stream=SeededStream(cfg.seed),
                              n=cfg.mc_samples)
        mc_eigs = reconstruct_eigenvalues(probe, root_tol=0.5)
        mc_err = float(np.max(np.abs(true_eigs - mc_eigs), initial=0.0))
        for i in range(d):
            rows.append(("mc_eigenvalue", str(i), float(true_eigs[i]),
                         float(mc_eigs[i]), abs(float(true_eigs[i] - mc_eigs[i]))))

    rows.append(("summary", "eigenvalue_max_abs_error", None, None, eig_err))
    rows.append(("summary", "hessian_max_abs_error", None, None, h_err))
    if mc_err is not None:
        rows.append(("summary", "mc_eigenvalue_max_abs_error", None, None, mc_err))
    path = outdir / "universality.csv"
    write_csv(path, ("kind", "index", "true_value", "reconstructed", "abs_error"),
              rows)
    _write_metadata(outdir, "universality-demo", {
        "dim": d, "mc_samples": cfg.mc_samples, "seed": cfg.seed,
        "probe_nodes": [float(s) for s in nodes]})
    return [str(path)]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharpness-lab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(f"environment: {OUT_DIR_ENV} sets the default output directory\n"
                "exit codes: 0 ok, 2 config error, 3 numerical error, 4 I/O error"))
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed(s)")
        p.add_argument("--threads", type=int, default=1,
                       help="concurrent sweep cells for train/bias-study")
    return parser


def _apply_seed_override(cfg, command: str, seed: Optional[int]):
    if seed is None:
        return cfg
    if command in ("train", "bias-study"):
        cfg.study.seeds = [seed]
    else:
        cfg.seed = seed
    return cfg


def run_command(command: str, config_path: str, out: Optional[str] = None,
                seed: Optional[int] = None, threads: int = 1) -> list[str]:
    try:
        raw = Path(config_path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
    config_hash = hashlib.sha256(raw).hexdigest()[:16]
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{config_path} is not valid JSON: {exc}") from exc
    cfg = parse_config(doc, command)
    cfg = _apply_seed_override(cfg, command, seed)
    outdir = _resolve_out_dir(out, cfg.out_dir)
    if command == "oracle":
        return run_oracle(cfg, outdir)
    if command == "estimate":
        return run_estimate(cfg, outdir)
    if command == "train":
        return run_train(cfg, outdir, threads, config_hash)
    if command == "bias-study":
        return run_bias_study(cfg, outdir, threads, config_hash)
    if command == "invariance-check":
        return run_invariance(cfg, outdir)
    if command == "universality-demo":
        return run_universality(cfg, outdir)
    raise ConfigError(f"unknown command {command!r}")


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        written = run_command(args.command, args.config, out=args.out,
                              seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
