"""Command-line driver: phantom, forward, faddeev, reconstruct, sweep, verify.

Exit codes: 0 success, 1 config/input error, 2 solver failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from .config import RunConfig, load, load_file
from .errors import (AdmissibilityError, ConfigError, ScatterLabError, SolverError, SupportError,
                     VerificationError)
from .faddeev import h_samples
from .forward import (SphereQuadrature, data_discrepancy, far_field_on_sphere, near_field_matrix)
from .inversion import (DELTA_FLOOR, SweepConfig, reconstruct_difference, schedule_from_delta,
                        stability_sweep)
from .medium import Grid3, RefractiveIndex, fourier_hat_many, make_phantom, potential_of
from .storage import ensure_dir, load_phantom, save_phantom, write_container, write_csv
from .verify import verify_pair
from ._kernels import outgoing_green

log = logging.getLogger("scatterlab")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3

SWEEP_COLUMNS = ("alpha", "delta_near", "delta_far", "rho", "kappa", "err_linf", "bound", "s", "C_fit")
H_COLUMNS = ("px", "py", "pz", "rho", "E", "re_h", "im_h", "re_vhat", "im_vhat", "residual")
DELTA_COLUMNS = ("phantom_id", "kind", "delta")


# ----------------------------------------------------------------- helpers

def _manifest(cfg: RunConfig) -> str:
    return f"# scatterlab {__version__}\n# config_digest={cfg.digest}\n" + cfg.canonical()


def _announce(cfg: RunConfig, args) -> None:
    if args.manifest:
        sys.stdout.write(_manifest(cfg))
    log.info("config digest %s", cfg.digest)


def _config(args) -> RunConfig:
    return load_file(args.config) if getattr(args, "config", None) else load("")


def _solver(cfg: RunConfig):
    return replace(cfg.solver, workers=cfg.effective_workers())


def _phantom_from_bumps(cfg: RunConfig, bumps) -> RefractiveIndex:
    return make_phantom(bumps, cfg.grid, cfg.r1, cfg.m, cfg.norm_budget)


def _resolve(path: str, base: str | None) -> str:
    if base is None or os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(base)), path)


def _pair(cfg: RunConfig, config_path: str | None, alpha: float):
    """(n1, n2): phantom files when named in the config, else base vs. base + alpha * perturbation."""
    if cfg.phantom1 or cfg.phantom2:
        if not (cfg.phantom1 and cfg.phantom2):
            raise ConfigError("phantom1 and phantom2 must be given together")
        n1 = load_phantom(_resolve(cfg.phantom1, config_path))
        n2 = load_phantom(_resolve(cfg.phantom2, config_path))
        if n1.grid != n2.grid:
            raise ConfigError("the two phantom files use different grids")
        return n1, n2
    n1 = _phantom_from_bumps(cfg, cfg.bumps)
    extra = tuple(b.scaled(alpha) for b in cfg.perturbation) if alpha != 0 else ()
    return n1, _phantom_from_bumps(cfg, cfg.bumps + extra)


def _stem(out: str | None, default: str) -> str:
    stem = out or default
    d = os.path.dirname(stem)
    if d:
        ensure_dir(d)
    return stem


# ---------------------------------------------------------------- commands

def cmd_phantom(args) -> int:
    cfg = load_file(args.config)
    _announce(cfg, args)
    n = _phantom_from_bumps(cfg, cfg.bumps)
    out = _stem(args.output, "phantom.bin")
    save_phantom(out, n, cfg.digest)
    log.info("wrote %s (%d bumps, C_n=%.6g)", out, len(cfg.bumps), n.certified_norm())
    return EXIT_OK


def _parse_quad(text: str | None, r: float, default: SphereQuadrature) -> SphereQuadrature:
    if text is None:
        return SphereQuadrature(r, default.n_theta, default.n_phi)
    try:
        nt, npf = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--quad expects NTHETAxNPHI, got {text!r}") from None
    return SphereQuadrature(r, nt, npf)


def _forward_data(v, kind, quad, solver):
    if kind == "near":
        return near_field_matrix(v, quad, solver)
    return far_field_on_sphere(v, quad, solver)


def _forward_rows(kind, data):
    if kind == "near":
        Y, w = data.quad.nodes, data.quad.weights
        for i in range(Y.shape[0]):
            for j in range(Y.shape[0]):
                z = data.values[i, j]
                yield (i, j, *Y[i], *Y[j], w[i], w[j], z.real, z.imag)
    else:
        for i in range(data.incident.shape[0]):
            for j in range(data.outgoing.shape[0]):
                z = data.values[i, j]
                yield (i, j, *data.incident[i], *data.outgoing[j], data.w_incident[i],
                       data.w_outgoing[j], z.real, z.imag)


def _selftest(kind, v, data) -> tuple[bool, str]:
    if v.is_zero and kind == "near":
        Y = data.quad.nodes
        d = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
        G = outgoing_green(Y, Y, v.omega)
        far = d >= data.quad.r / 4
        err = float(np.max(np.abs(data.values - G)[far] / np.abs(G[far])))
        return err <= 1e-6, f"free-space kernel max relative error {err:.3e} (tolerance 1e-6)"
    if v.is_zero:
        err = float(np.max(np.abs(data.values)))
        return err == 0.0, f"free-space far field max |f| {err:.3e} (must be 0)"
    if kind == "near":
        defect = data.reciprocity_defect()
        return defect <= 1e-3, f"reciprocity defect {defect:.3e} (tolerance 1e-3)"
    res = data.max_residual
    return res <= 1e-6, f"max solver residual {res:.3e} (tolerance 1e-6)"


def cmd_forward(args) -> int:
    cfg = _config(args)
    n = load_phantom(args.phantom)
    omega = args.omega if args.omega is not None else cfg.omega
    cfg = replace(cfg, omega=float(omega), grid=n.grid, r1=n.support_radius)
    _announce(cfg, args)
    base = cfg.near if args.kind == "near" else cfg.far
    r = args.r if args.r is not None else base.r
    if args.kind == "near" and not r > n.support_radius:
        raise ConfigError(f"--r {r} must exceed the phantom support radius r1={n.support_radius}")
    quad = _parse_quad(args.quad, r, base)
    v = potential_of(n, omega)
    solver = _solver(cfg)
    data = _forward_data(v, args.kind, quad, solver)
    stem = _stem(args.output, f"{args.kind}_field")
    meta = {"kind": args.kind, "omega": float(omega), "quad": quad.describe(),
            "max_residual": data.max_residual}
    write_container(stem + ".bin", f"{args.kind}_field", data.values, meta, n.grid, cfg.digest)
    cols = ("i", "j", "x_i", "y_i", "z_i", "x_j", "y_j", "z_j", "w_i", "w_j", "re", "im")
    write_csv(stem + ".csv", cols, _forward_rows(args.kind, data), cfg.digest)
    if args.reference:
        n2 = load_phantom(args.reference)
        if n2.grid != n.grid:
            raise ConfigError("reference phantom uses a different grid")
        d2 = _forward_data(potential_of(n2, omega), args.kind, quad, solver)
        delta = data_discrepancy(data, d2, args.kind)
        write_csv(stem + "_delta.csv", DELTA_COLUMNS,
                  [(os.path.basename(args.reference), args.kind, delta)], cfg.digest)
    log.info("wrote %s.bin and %s.csv", stem, stem)
    if args.selftest:
        ok, msg = _selftest(args.kind, v, data)
        print(f"selftest: {'PASS' if ok else 'FAIL'}: {msg}")
        if not ok:
            return EXIT_VERIFY
    return EXIT_OK


def _parse_p(texts):
    out = []
    for t in texts:
        try:
            vals = [float(x) for x in t.split(",")]
        except ValueError:
            raise ConfigError(f"--p expects px,py,pz, got {t!r}") from None
        if len(vals) != 3:
            raise ConfigError(f"--p expects three components, got {t!r}")
        out.append(tuple(vals))
    return tuple(out)


def cmd_faddeev(args) -> int:
    cfg = _config(args)
    n = load_phantom(args.phantom)
    omega = args.omega if args.omega is not None else cfg.omega
    cfg = replace(cfg, omega=float(omega), grid=n.grid, r1=n.support_radius,
                  rho=tuple(args.rho) if args.rho else cfg.rho,
                  p=_parse_p(args.p) if args.p else cfg.p)
    _announce(cfg, args)
    v = potential_of(n, omega)
    rho_min = cfg.rho_min if cfg.rho_min is not None else 0.5 * max(1.0, math.sqrt(v.E))
    P = np.array(cfg.p, dtype=float)
    vhat = fourier_hat_many(v, P) if len(P) else np.zeros(0, complex)
    rows = []
    for rho in cfg.rho:
        if rho < rho_min:
            log.warning("rho=%g is below rho_min=%g; the CGO equation may not contract", rho, rho_min)
        est = h_samples(v, P, rho, _solver(cfg), cfg.method)
        for e, vh in zip(est, vhat):
            rows.append((*e.p, e.rho, e.E, e.value.real, e.value.imag, vh.real, vh.imag, e.residual))
    out = _stem(args.output, "h_samples.csv")
    write_csv(out, H_COLUMNS, rows, cfg.digest)
    log.info("wrote %s (%d rows)", out, len(rows))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = load_file(args.config)
    _announce(cfg, args)
    n1, n2 = _pair(cfg, args.config, cfg.alpha)
    v1, v2 = potential_of(n1, cfg.omega), potential_of(n2, cfg.omega)
    solver = _solver(cfg)
    near1 = near_field_matrix(v1, cfg.near, solver)
    near2 = near_field_matrix(v2, cfg.near, solver)
    dn = data_discrepancy(near1, near2, "near")
    sch = schedule_from_delta(max(dn, DELTA_FLOOR), cfg.tau, cfg.r2, v1.E, cfg.eps)
    rec = reconstruct_difference(v1, v2, sch, solver=solver, method=cfg.method, m=cfg.m)
    r = rec.record
    r.alpha, r.delta_near = cfg.alpha, max(dn, DELTA_FLOOR)
    outdir = ensure_dir(args.output or "reconstruct_out")
    write_container(os.path.join(outdir, "reconstruction.bin"), "potential_difference", rec.field,
                    {"rho": r.rho, "kappa": r.kappa, "delta_near": r.delta_near}, v1.grid, cfg.digest)
    write_csv(os.path.join(outdir, "record.csv"), SWEEP_COLUMNS,
              [(r.alpha, r.delta_near, r.delta_far, r.rho, r.kappa, r.err_linf, r.bound, r.s, r.C_fit)],
              cfg.digest)
    write_csv(os.path.join(outdir, "deltas.csv"), DELTA_COLUMNS,
              [(f"{cfg.pair_id}:alpha={cfg.alpha!r}", "near", dn)], cfg.digest)
    with open(os.path.join(outdir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(_manifest(cfg))
    log.info("rho=%.6g kappa=%.6g err_linf=%.6g", r.rho, r.kappa, r.err_linf)
    return EXIT_OK


def sweep_config(cfg: RunConfig) -> SweepConfig:
    return SweepConfig(grid=cfg.grid, r1=cfg.r1, omega=cfg.omega, base=cfg.bumps,
                       perturbation=cfg.perturbation, alphas=cfg.alphas, m=cfg.m, tau=cfg.tau,
                       r2=cfg.r2, eps=cfg.eps, quad=cfg.near, far_quad=cfg.far,
                       solver=_solver(cfg), method=cfg.method, workers=cfg.effective_workers(),
                       pair_id=cfg.pair_id)


def write_sweep(outdir: str, cfg: RunConfig, result) -> None:
    recs = result.records
    d = cfg.digest
    write_csv(os.path.join(outdir, "sweep.csv"), SWEEP_COLUMNS,
              [(r.alpha, r.delta_near, r.delta_far, r.rho, r.kappa, r.err_linf, r.bound, r.s, r.C_fit)
               for r in recs], d)
    ok = [r for r in recs if r.status == "ok"]
    for kind, attr in (("near", "delta_near"), ("far", "delta_far")):
        rows = [(math.log(3.0 + 1.0 / getattr(r, attr)), r.err_linf) for r in ok
                if getattr(r, attr) > 0 and math.isfinite(getattr(r, attr))]
        write_csv(os.path.join(outdir, f"plot_{kind}.csv"), ("ln(3+1/delta)", "err"), rows, d)
    write_csv(os.path.join(outdir, "deltas.csv"), DELTA_COLUMNS,
              [(f"{r.pair_id}:alpha={r.alpha!r}", kind, getattr(r, attr))
               for r in recs for kind, attr in (("near", "delta_near"), ("far", "delta_far"))], d)
    with open(os.path.join(outdir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(_manifest(cfg))
        fh.write(f"# C_fit={result.C_fit!r} s={result.s!r} envelope_ok={result.envelope_ok} "
                 f"monotone_ok={result.monotone_ok} failed_rungs={len(result.failures)}\n")
        for r in result.failures:
            fh.write(f"# rung alpha={r.alpha!r}: {r.status}\n")


def cmd_sweep(args) -> int:
    cfg = load_file(args.config)
    _announce(cfg, args)
    if not cfg.perturbation:
        raise ConfigError("sweep needs at least one perturbation block")
    result = stability_sweep(sweep_config(cfg))
    outdir = ensure_dir(args.output or "sweep_out")
    write_sweep(outdir, cfg, result)
    log.info("C_fit=%.6g envelope_ok=%s monotone_ok=%s", result.C_fit, result.envelope_ok,
             result.monotone_ok)
    if len(result.failures) > 0.2 * len(result.records):
        log.error("%d of %d rungs failed", len(result.failures), len(result.records))
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_file(args.config)
    _announce(cfg, args)
    n1, n2 = _pair(cfg, args.config, 1.0)
    v1, v2 = potential_of(n1, cfg.omega), potential_of(n2, cfg.omega)
    solver = _solver(cfg)
    near1 = near_field_matrix(v1, cfg.near, solver)
    near2 = near1 if np.array_equal(n1.samples, n2.samples) else near_field_matrix(v2, cfg.near, solver)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        blocks = verify_pair(v1, v2, near1, near2, cfg.verify, solver, cfg.method, cfg.digest)
    outdir = ensure_dir(args.output or "verify_out")
    with open(os.path.join(outdir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(b.render() for b in blocks) + "\n")
    write_csv(os.path.join(outdir, "regression.csv"), ("check", "x", "y"),
              [pt for b in blocks for pt in b.points], cfg.digest)
    for b in blocks:
        print(f"{b.name}: {'PASS' if b.passed else 'FAIL'}")
    return EXIT_OK if all(b.passed for b in blocks) else EXIT_VERIFY


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scatterlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"scatterlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", action="store_true", help="print the effective configuration")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-o", "--output", help="output file, prefix or directory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="write a refractive-index container")
    p.add_argument("config")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("forward", parents=[common], help="near- or far-field data of a phantom")
    p.add_argument("phantom")
    p.add_argument("--config")
    p.add_argument("--kind", choices=("near", "far"), default="near")
    p.add_argument("--r", type=float, help="measurement sphere radius (near)")
    p.add_argument("--quad", help="sphere rule as NTHETAxNPHI, e.g. 16x32")
    p.add_argument("--omega", type=float)
    p.add_argument("--reference", help="second phantom; writes the data discrepancy")
    p.add_argument("--selftest", action="store_true", help="check against analytic/structural oracles")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("faddeev", parents=[common], help="h(k, l) samples next to v_hat(p)")
    p.add_argument("phantom")
    p.add_argument("--config")
    p.add_argument("--omega", type=float)
    p.add_argument("--rho", type=float, action="append")
    p.add_argument("--p", action="append", help="px,py,pz (repeatable)")
    p.set_defaults(func=cmd_faddeev)

    for name, fn, hlp in (("reconstruct", cmd_reconstruct, "one reconstruction of v2 - v1"),
                          ("sweep", cmd_sweep, "stability sweep over an alpha ladder"),
                          ("verify", cmd_verify, "identity and inequality checks")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("config")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigError, AdmissibilityError, SupportError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScatterLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
