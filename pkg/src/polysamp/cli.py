"""Command-line front end.

Commands:
    params    print the parameter schedule a run would use
    sample    draw N points, write a CSV (coordinates + telemetry per row)
    diagnose  run a sampling pass and compare it against the exact cell
              masses (d <= 3): sup-log-ratio, TV estimate, tau statistics
    erm       run the private ERM pipeline on an instance file

Exit codes: 0 ok, 2 configuration error, 3 contract violation (an internal
invariant tripped at runtime, e.g. an oracle point outside the polytope).

Every output file starts with comment lines carrying a config hash (over
input file bytes and resolved options), the package version, and a hash of
the derived parameters, so runs can be matched to their configuration
without trusting file names. No timestamps: byte-identical reruns are the
determinism contract.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, converter, dikin, dp, oracle
from .density import parse_density
from .errors import ConfigError, ContractViolation
from .geometry import load_polytope
from .pipeline import AUX_STREAM, rng_stream, run_sampling

DESK_CMIX = 1e-4
ANALYSIS_CMIX = 1.0


def _hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _config_hash(args, extra: str = "") -> str:
    digest = _file_digest(args.polytope) if args.polytope else "none"
    parts = [f"cmd={args.command}", f"polytope={digest}"]
    for key in ("density", "eps", "seed", "n", "cmix", "eta", "oracle", "bins"):
        if hasattr(args, key):
            parts.append(f"{key}={getattr(args, key)!r}")
    if extra:
        parts.append(extra)
    return _hash("|".join(parts))


def _params_hash(params: converter.ConverterParams, T) -> str:
    return _hash(
        f"eps={params.eps!r}|delta={params.delta!r}|tau_max={params.tau_max}"
        f"|delta_log={params.delta_log!r}|T={T}"
    )


def _resolve_cmix(args, default: float) -> float:
    if args.cmix is not None:
        return args.cmix
    return ANALYSIS_CMIX if args.paper_constants else default


def _open_out(args):
    if args.out is None:
        return sys.stdout, False
    return open(args.out, "w", newline="\n"), True


def _load_inputs(args):
    """Polytope + density resolution, including the erm:FILE density kind."""
    spec = args.density
    if spec.startswith("erm:"):
        inst = dp.load_erm_instance(spec[4:])
        f = dp.total_loss_density(inst)
        P = load_polytope(args.polytope) if args.polytope else inst.polytope
        if P.d != inst.d:
            raise ConfigError("polytope dimension does not match the ERM instance")
        return P, f
    if args.polytope is None:
        raise ConfigError("--polytope is required")
    P = load_polytope(args.polytope)
    return P, parse_density(spec, P.d)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_params(args) -> int:
    P, f = _load_inputs(args)
    c_mix = _resolve_cmix(args, DESK_CMIX)
    params = converter.compute_params(args.eps, f.L, P.r, P.R, P.d)
    T = dikin.mixing_steps(P, f, args.eps, params.delta_log, c_mix)
    lines = [
        f"d = {P.d}",
        f"m = {P.m}",
        f"L = {f.L!r}",
        f"r = {P.r!r}",
        f"R = {P.R!r}",
        f"eps = {args.eps!r}",
        f"tau_max = {params.tau_max}",
        f"delta = {params.delta!r}",
        f"delta_log_e = {params.delta_log!r}",
        f"delta_log_10 = {params.delta_log / math.log(10)!r}",
        f"c_mix = {c_mix!r}",
        f"T = {T}",
        f"est_f_evals = {3 * T}",
        f"params_hash = {_params_hash(params, T)}",
        f"config_hash = {_config_hash(args)}",
    ]
    print("\n".join(lines))
    return 0


def _csv_float(x: float) -> str:
    return repr(float(x))


def cmd_sample(args) -> int:
    P, f = _load_inputs(args)
    c_mix = _resolve_cmix(args, DESK_CMIX)
    result = run_sampling(
        P,
        f,
        eps=args.eps,
        n=args.n,
        seed=args.seed,
        c_mix=c_mix,
        eta=args.eta,
        oracle=args.oracle,
        workers=args.workers,
    )
    out, close = _open_out(args)
    try:
        out.write(f"# config_hash={_config_hash(args)}\n")
        out.write(f"# version={__version__}\n")
        out.write(f"# params_hash={_params_hash(result.params, result.T)}\n")
        coords = ",".join(f"x{j + 1}" for j in range(P.d))
        out.write(f"index,{coords},tau,fallback,oracle_calls\n")
        for i in range(len(result)):
            xs = ",".join(_csv_float(v) for v in result.points[i])
            out.write(
                f"{i},{xs},{result.tau[i]},{int(result.fallback[i])},{result.oracle_calls[i]}\n"
            )
    finally:
        if close:
            out.close()
    return 0


def _measured_acceptance(result) -> float:
    """Acceptance rate of the production walk config on a short pilot."""
    rng = rng_stream(result.seed, AUX_STREAM + 1)
    cfg = dikin.WalkConfig(eta=result.eta, T=min(result.T, 500))
    X0 = dikin.warm_start_many(result.polytope, rng, 64)
    _, accepts = dikin.run_chains_batch(result.polytope, result.density, cfg, X0, rng)
    return accepts / (X0.shape[0] * cfg.T)


def cmd_diagnose(args) -> int:
    P, f = _load_inputs(args)
    if P.d > 3:
        raise ConfigError("diagnose compares against cell quadrature and needs d <= 3")
    c_mix = _resolve_cmix(args, DESK_CMIX)
    result = run_sampling(
        P,
        f,
        eps=args.eps,
        n=args.n,
        seed=args.seed,
        c_mix=c_mix,
        eta=args.eta,
        oracle=args.oracle,
        workers=args.workers,
    )
    bins = args.bins if args.bins is not None else {1: 50, 2: 20, 3: 6}[P.d]
    grid = oracle.cell_masses(result.polytope, result.density, bins)
    normalized = result.points - result.translation
    counts = oracle.histogram_counts(normalized, grid)
    report = oracle.sup_log_ratio(normalized, grid)
    tv = oracle.tv_estimate(normalized, grid)
    stats = converter.tau_statistics(result.batch(), eps=args.eps)

    if result.oracle_kind == "dikin":
        acceptance = _measured_acceptance(result)
    else:
        acceptance = float("nan")

    out, close = _open_out(args)
    try:
        out.write(f"# config_hash={_config_hash(args)}\n")
        out.write(f"# version={__version__}\n")
        out.write(f"# params_hash={_params_hash(result.params, result.T)}\n")
        out.write(f"# n={args.n}\n")
        out.write(f"# oracle={result.oracle_kind}\n")
        out.write(f"# T={result.T}\n")
        out.write(f"# eta={result.eta!r}\n")
        out.write(f"# acceptance={acceptance!r}\n")
        out.write(f"# tv_estimate={tv!r}\n")
        out.write(f"# sup_log_ratio={report.stat!r}\n")
        out.write(f"# sup_max_z={report.max_z()!r}\n")
        out.write(f"# excluded_cells={len(report.excluded)}\n")
        out.write(f"# tau_mean={stats.mean!r}\n")
        out.write(f"# fallback_rate={float(np.mean(result.fallback))!r}\n")
        for t in range(1, len(stats.tail_geq)):
            out.write(f"# tau_tail_geq_{t}={float(stats.tail_geq[t])!r}\n")
        mids = ",".join(f"mid{j + 1}" for j in range(P.d))
        out.write(f"cell,{mids},mass,count,freq,log_ratio,sigma,included\n")
        centers = grid.cell_centers()
        n = len(result)
        incl = np.zeros(grid.n_cells, dtype=bool)
        incl[report.cells] = True
        lr = np.full(grid.n_cells, np.nan)
        sg = np.full(grid.n_cells, np.nan)
        lr[report.cells] = report.log_ratio
        sg[report.cells] = report.sigma
        for c in range(grid.n_cells):
            ms = ",".join(_csv_float(v) for v in centers[c])
            out.write(
                f"{c},{ms},{_csv_float(grid.masses[c])},{counts[c]},"
                f"{_csv_float(counts[c] / n)},{_csv_float(lr[c])},{_csv_float(sg[c])},"
                f"{int(incl[c])}\n"
            )
    finally:
        if close:
            out.close()
    return 0


def cmd_erm(args) -> int:
    inst = dp.load_erm_instance(args.polytope)
    c_mix = _resolve_cmix(args, ANALYSIS_CMIX)
    batch = dp.private_erm_batch(
        inst, rng_stream(args.seed, 0), args.n, c_mix=c_mix, eta=args.eta
    )
    csum = inst.losses.sum(axis=0)
    best = float(np.min(dp.enumerate_vertices(inst.polytope) @ csum))
    gaps = batch.thetas @ csum - best

    out, close = _open_out(args)
    try:
        out.write(f"# config_hash={_config_hash(args)}\n")
        out.write(f"# version={__version__}\n")
        out.write(f"# params_hash={_params_hash(batch.params, batch.T)}\n")
        out.write(f"# t_halt={batch.t_halt}\n")
        out.write(f"# eta={batch.eta!r}\n")
        out.write(f"# mean_gap={float(gaps.mean())!r}\n")
        coords = ",".join(f"theta{j + 1}" for j in range(inst.d))
        out.write(f"index,{coords},tau,fallback,oracle_calls,gap\n")
        for i in range(len(batch)):
            xs = ",".join(_csv_float(v) for v in batch.thetas[i])
            out.write(
                f"{i},{xs},{batch.tau[i]},{batch.fallback[i]},"
                f"{batch.oracle_calls[i]},{_csv_float(gaps[i])}\n"
            )
    finally:
        if close:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------


def _add_common(sp, *, density: bool = True, eps: bool = True):
    sp.add_argument("--polytope", help="polytope (or ERM instance) file")
    if density:
        sp.add_argument(
            "--density",
            default="uniform",
            help="uniform | linear:c1,..,cd | norm1:LEVEL | erm:FILE",
        )
    if eps:
        sp.add_argument("--eps", type=float, required=True, help="infinity-distance target")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=1, help="number of output points")
    sp.add_argument("--cmix", type=float, default=None, help="mixing-time prefactor override")
    sp.add_argument("--eta", type=float, default=None, help="walk step size (default: auto-tune)")
    sp.add_argument("--out", default=None, help="output file (default: stdout)")
    sp.add_argument("--workers", type=int, default=1, help="worker threads for chunks")
    sp.add_argument(
        "--paper-constants",
        action="store_true",
        help="use C_mix=1 (the analysis constant) instead of the desk default",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polysamp",
        description="Sample log-concave densities on polytopes with a bounded "
        "infinity-distance error.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="print the derived parameter schedule")
    _add_common(sp)

    sp = sub.add_parser("sample", help="draw N points to CSV")
    _add_common(sp)
    sp.add_argument("--oracle", choices=("dikin", "exact"), default="dikin")

    sp = sub.add_parser("diagnose", help="compare a run against exact cell masses (d <= 3)")
    _add_common(sp)
    sp.add_argument("--oracle", choices=("dikin", "exact"), default="dikin")
    sp.add_argument("--bins", type=int, default=None, help="grid cells per axis")

    sp = sub.add_parser("erm", help="differentially private ERM on an instance file")
    _add_common(sp, density=False, eps=False)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "erm" and args.polytope is None:
        print("config error: erm needs --polytope INSTANCE_FILE", file=sys.stderr)
        return 2
    handler = {
        "params": cmd_params,
        "sample": cmd_sample,
        "diagnose": cmd_diagnose,
        "erm": cmd_erm,
    }[args.command]
    try:
        return handler(args)
    except ValueError as exc:
        # ConfigError subclasses ValueError; bare ValueErrors reaching this
        # point are domain checks on argv-derived scalars (eps, n, seed, ...)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
