"""Command-line front end for the batch simulator.

Subcommands mirror the experiment entry points: power-sweep (user count),
sep-sweep (SEP target, power only), ber-curve (SEP target with receiver
noise draws), uncertainty-sweep (channel-estimate quality), solve-one (a
single slot's QP with optional triplet/trace dumps), and validate (a fast
invariant battery). Options come from an optional JSON config file whose
keys match ExperimentConfig fields; explicit flags override file values.
"""

import argparse
import json
import sys

import numpy as np

from .channel import effective_channel, generate_channel, tap_variances
from .constellation import (
    assemble_qp,
    boundary_points,
    complex_unstack,
    constraint_region,
    export_triplets,
    min_scaling_4qam,
    min_scaling_16qam,
    q_function,
    q_inverse,
    success_product,
    symbol_vector,
)
from .detection import detect_qam, detect_replica
from .harness import (
    KNOWN_SCHEMES,
    ExperimentConfig,
    collect_rows,
    proposed_constellation,
    run_ber_experiment,
    run_operating_point,
    run_power_experiment,
    run_uncertainty_experiment,
    write_rows_csv,
)
from .precoders import complex_modulo, thp_zf_encode, zf_precode
from .rngstreams import CHANNEL_STREAM, DATA_STREAM, SIGNATURE_STREAM, derived_rng
from .signatures import generate_regular_signatures, validate_regularity
from .solver import SolverOptions, solve


def _add_common(parser):
    parser.add_argument("--config", help="JSON file of ExperimentConfig fields")
    parser.add_argument("--out", help="output CSV path (meta sidecar written too)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--subcarriers", type=int, help="N")
    parser.add_argument("--nonzeros", type=int, help="L, nonzeros per signature")
    parser.add_argument("--modulation", type=int, choices=(4, 16))
    parser.add_argument("--pe", type=float, help="per-user SEP target")
    parser.add_argument("--slots", type=int)
    parser.add_argument("--realizations", type=int, help="signature realizations")
    parser.add_argument("--schemes", nargs="+", choices=KNOWN_SCHEMES)
    parser.add_argument("--noise-draws", type=int, help="receiver noise draws per slot")
    parser.add_argument("--max-iterations", type=int)
    parser.add_argument("--rel-tolerance", type=float)
    parser.add_argument("--calibration-slots", type=int)


_FLAG_TO_FIELD = {
    "seed": "master_seed",
    "subcarriers": "n_subcarriers",
    "nonzeros": "nonzeros_per_user",
    "modulation": "modulation",
    "pe": "pe_target",
    "slots": "slots",
    "realizations": "signature_realizations",
    "noise_draws": "noise_draws_per_slot",
    "calibration_slots": "calibration_slots",
}


def build_config(args, **extra):
    """ExperimentConfig from config file plus flag overrides plus extras."""
    fields = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            fields.update(json.load(fh))
    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            fields[field] = value
    if getattr(args, "schemes", None):
        fields["schemes"] = tuple(args.schemes)
    elif "schemes" in fields:
        fields["schemes"] = tuple(fields["schemes"])
    solver_fields = dict(fields.pop("solver", {}))
    if getattr(args, "max_iterations", None) is not None:
        solver_fields["max_iterations"] = args.max_iterations
    if getattr(args, "rel_tolerance", None) is not None:
        solver_fields["rel_tolerance"] = args.rel_tolerance
    fields["solver"] = SolverOptions(**solver_fields)
    fields.update(extra)
    fields.setdefault("n_users", fields.get("n_subcarriers", 32))
    return ExperimentConfig(**fields)


def _emit(results, config, out):
    rows = collect_rows(results)
    if out:
        write_rows_csv(out, rows, config)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        for row in rows:
            print(f"{row.scheme:10s} K={row.K:3d} L={row.L:2d} M={row.M:2d} "
                  f"pe={row.pe_target:g} P={row.power_db:7.3f} dB "
                  f"sep={row.sep:.3e} ber={row.ber:.3e} iters={row.iters_mean:.1f}")
    return 0


def cmd_power_sweep(args):
    config = build_config(args, n_users=int(args.users[0]))
    results = run_power_experiment(config, [int(u) for u in args.users])
    return _emit(results, config, args.out)


def cmd_sep_sweep(args):
    config = build_config(args, n_users=args.users,
                          **({} if args.noise_draws is not None
                             else {"noise_draws_per_slot": 0}))
    results = run_ber_experiment(config, [float(p) for p in args.pe_values])
    return _emit(results, config, args.out)


def cmd_ber_curve(args):
    config = build_config(args, n_users=args.users)
    results = run_ber_experiment(config, [float(p) for p in args.pe_values])
    return _emit(results, config, args.out)


def cmd_uncertainty_sweep(args):
    config = build_config(args, n_users=args.users)
    results = run_uncertainty_experiment(config, [float(t) for t in args.tau_db])
    return _emit(results, config, args.out)


def cmd_solve_one(args):
    config = build_config(args, n_users=args.users)
    k, n, l = config.n_users, config.n_subcarriers, config.nonzeros_per_user
    sig = generate_regular_signatures(
        k, n, l, derived_rng(config.master_seed, SIGNATURE_STREAM,
                             args.signature_index))
    chan = generate_channel(k, n, config.n_taps, config.tap_decay,
                            derived_rng(config.master_seed, CHANNEL_STREAM,
                                        args.slot, 0))
    eff = effective_channel(sig, chan)
    syms = derived_rng(config.master_seed, DATA_STREAM, args.slot).integers(
        1, config.modulation + 1, k)
    spec = proposed_constellation(config)
    regions = [constraint_region(int(syms[u]), spec, user=u) for u in range(k)]
    system = assemble_qp(eff, regions)
    if args.dump_triplets:
        export_triplets(system, args.dump_triplets)
    result = solve(system, config.solver)
    x = complex_unstack(result.x_tilde)
    if args.dump_trace:
        np.savetxt(args.dump_trace, result.dual_trace)
    summary = {
        "n_users": k, "n_subcarriers": n, "nonzeros_per_user": l,
        "modulation": config.modulation, "pe_target": config.pe_target,
        "beta": spec.beta, "symbols": [int(s) for s in syms],
        "power": result.power,
        "power_db": float(10 * np.log10(result.power)),
        "iterations": result.iterations, "converged": result.converged,
        "primal_feasibility": result.primal_feasibility,
        "messages": result.message_count, "addition_count": result.addition_count,
        "multiplication_count": result.multiplication_count,
        "x_real": [float(v) for v in x.real],
        "x_imag": [float(v) for v in x.imag],
    }
    text = json.dumps(summary, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote summary to {args.out}")
    else:
        print(text)
    return 0


def _check(name, ok, failures):
    print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if not ok:
        failures.append(name)


def cmd_validate(args):
    """Fast invariant battery over every layer; nonzero exit on failure."""
    seed = args.seed if args.seed is not None else 2026
    rng = np.random.default_rng(seed)
    failures = []

    sig = generate_regular_signatures(24, 32, 8, rng)
    report = validate_regularity(sig)
    _check("signature row/column regularity (K=24 N=32 L=8)", report.valid, failures)
    full = generate_regular_signatures(32, 32, 8, rng)
    _check("full-load signature regularity (K=N=32)",
           validate_regularity(full).valid, failures)

    _check("tap variances normalize to unit energy",
           abs(tap_variances(8).sum() - 1.0) < 1e-12, failures)

    sigma = 1.0 / np.sqrt(2.0)
    b4 = min_scaling_4qam(sigma, 1e-3)
    b16 = min_scaling_16qam(sigma, 1e-3)
    _check("4-QAM minimum scaling yields SEP target",
           abs((1.0 - q_function(b4 / sigma)) ** 2 - (1.0 - 1e-3)) < 1e-12,
           failures)
    _check("16-QAM minimum scaling yields SEP target",
           abs((1.0 - 2.0 * q_function(b16 / sigma)) ** 2 - (1.0 - 1e-3)) < 1e-12,
           failures)
    _check("Q and Q^{-1} round trip", abs(q_inverse(q_function(1.7)) - 1.7) < 1e-10,
           failures)

    spec = proposed_constellation(ExperimentConfig(n_users=8, modulation=4))
    pts_ok = True
    for sym in range(1, 5):
        for pt in boundary_points(sym, spec):
            prod = success_product(pt, sym, spec)
            pts_ok = pts_ok and abs(prod - (1.0 - spec.sep_target)) < 1e-9
    _check("4-QAM boundary points sit on the SEP surface", pts_ok, failures)

    chan = generate_channel(8, 8, seed=rng)
    eff = effective_channel(generate_regular_signatures(8, 8, 4, rng), chan)
    syms = rng.integers(1, 5, 8)
    d = symbol_vector(syms, 4, spec.beta)
    xz = zf_precode(eff.matrix, d)
    _check("ZF reproduces the scaled symbols",
           float(np.max(np.abs(eff.matrix @ xz - d))) < 1e-9, failures)

    regions = [constraint_region(int(syms[u]), spec, user=u) for u in range(8)]
    system = assemble_qp(eff, regions)
    result = solve(system)
    x = complex_unstack(result.x_tilde)
    tol = 1e-4 * max(1.0, float(np.max(np.abs(system.c_vec))))
    _check("QP solve converges within its feasibility tolerance",
           result.converged and result.primal_feasibility <= tol, failures)
    _check("QP power does not exceed ZF power",
           result.power <= float(np.vdot(xz, xz).real) * (1.0 + 1e-9), failures)

    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    folded = complex_modulo(4.0 * u, 2.0)
    _check("complex modulo folds into the half-open cell",
           bool(np.all(np.abs(folded.real) <= 1.0)
                and np.all(np.abs(folded.imag) <= 1.0)), failures)

    xt, enc = thp_zf_encode(eff.matrix, syms, 4, spec.beta)
    recon = float(np.max(np.abs(eff.matrix @ xt - enc.replica_points)))
    _check("THP noiseless receive hits the replica points", recon < 1e-8, failures)
    _check("replica detection decodes the THP slot",
           bool(np.all(detect_replica(eff.matrix @ xt, 4, spec.beta) == syms)),
           failures)
    _check("QAM detection inverts the symbol map",
           bool(np.all(detect_qam(symbol_vector(np.arange(1, 17), 16, b16),
                                  16, b16) == np.arange(1, 17))), failures)

    print(f"{len(failures)} failures" if failures else "all checks passed")
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mccdma",
        description="Power-minimizing precoding simulator for sparse MC-CDMA")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("power-sweep", help="sweep the user count")
    _add_common(p)
    p.add_argument("--users", nargs="+", type=int, required=True)
    p.set_defaults(func=cmd_power_sweep)

    p = sub.add_parser("sep-sweep", help="sweep the SEP target (power only)")
    _add_common(p)
    p.add_argument("--users", type=int, default=32)
    p.add_argument("--pe-values", nargs="+", type=float, required=True)
    p.set_defaults(func=cmd_sep_sweep)

    p = sub.add_parser("ber-curve", help="sweep the SEP target measuring BER")
    _add_common(p)
    p.add_argument("--users", type=int, default=32)
    p.add_argument("--pe-values", nargs="+", type=float, required=True)
    p.set_defaults(func=cmd_ber_curve)

    p = sub.add_parser("uncertainty-sweep",
                       help="sweep channel-estimate uncertainty")
    _add_common(p)
    p.add_argument("--users", type=int, default=32)
    p.add_argument("--tau-db", nargs="+", type=float, required=True)
    p.set_defaults(func=cmd_uncertainty_sweep)

    p = sub.add_parser("solve-one", help="solve a single slot's QP")
    _add_common(p)
    p.add_argument("--users", type=int, default=32)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--signature-index", type=int, default=0)
    p.add_argument("--dump-triplets", help="write the QP in triplet text form")
    p.add_argument("--dump-trace", help="write the dual objective trace")
    p.set_defaults(func=cmd_solve_one)

    p = sub.add_parser("validate", help="fast invariant battery")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
