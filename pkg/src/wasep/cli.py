"""Command-line entry points.

Subcommands mirror the library surface: rate-spec validation, transport
coefficient tables, adjoint oracle checks and residual studies, PDE runs,
the brute-force oracle battery, raw simulation, and experiment
orchestration.  Outputs go to stdout or to plain CSV files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .adjoint import adjoint_one, residual_field
from .exact import adjoint_apply_one, build_generator, config_index, detailed_balance_defect, evolve, product_measure_vector
from .harness import (
    load_experiment_config,
    report_lines,
    resolve_profile,
    resolve_spec,
    run_experiment,
)
from .lattice import Torus, all_configurations
from .measures import DensityProfile, sample_product
from .pde import burgers_solve, downsample, semidiscrete_solve
from .profiles import make_field, sample_field
from .rates import compute_transport, einstein_check, load_spec, preset, validate_rate_spec
from .kmc import simulate_ensemble, throughput_estimate
from .scaling import ScalingPlan, scaling_check


def _spec_from_args(args) -> "RateSpec":
    if args.spec_file:
        return load_spec(args.spec_file)
    params = {}
    if args.preset == "ssep":
        params["d"] = args.d
    if args.preset == "beta_env":
        params["beta"] = args.beta
    return preset(args.preset, **params)


def _add_spec_arguments(parser) -> None:
    parser.add_argument("--preset", default="ssep", help="ssep or beta_env")
    parser.add_argument("--spec-file", default=None, help="YAML rate spec file")
    parser.add_argument("--d", type=int, default=1)
    parser.add_argument("--beta", type=float, default=0.2)


def cmd_rates_validate(args) -> int:
    spec = _spec_from_args(args)
    torus = Torus(spec.d, args.n) if args.n else None
    report = validate_rate_spec(spec, torus)
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


def cmd_coeffs(args) -> int:
    spec = _spec_from_args(args)
    transport = compute_transport(spec)
    print(f"spec {spec.name}: alpha0 = {transport.alpha0:.12g}")
    for j in range(spec.d):
        print(f"  sigma''_{j+1}{j+1}(alpha0) = {transport.sigma_dd_alpha0[j]:.12g}")
    print("rho, " + ", ".join(f"D_{j+1}{j+1}, sigma_{j+1}{j+1}" for j in range(spec.d)))
    for rho in np.linspace(0.0, 1.0, args.grid + 2)[1:-1]:
        cols = []
        for j in range(spec.d):
            cols.append(f"{transport.diffusivity[j][j](rho):.10g}")
            cols.append(f"{transport.mobility[j](rho):.10g}")
        print(f"{rho:.6f}, " + ", ".join(cols))
    report = einstein_check(spec)
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


def cmd_adjoint_check(args) -> int:
    spec = _spec_from_args(args)
    torus = Torus(spec.d, args.n)
    scaling = ScalingPlan(d=spec.d, n=args.n, a_n=args.a_n or float(np.sqrt(args.n)))
    x = np.arange(torus.size)
    values = 0.5 + args.amplitude * np.cos(2 * np.pi * (x % args.n) / args.n)
    profile = DensityProfile(torus, values)
    worst = 0.0
    for parts in ("S", "T", "both"):
        expansion = adjoint_one(spec, profile, scaling, parts=parts)
        oracle = adjoint_apply_one(build_generator(spec, torus, scaling, parts=parts), profile)
        dev = max(
            abs(expansion.evaluate(config) - oracle[config_index(config)])
            for config in all_configurations(torus)
        )
        worst = max(worst, dev)
        print(f"parts={parts:<4s} max|expansion - matrix| = {dev:.3e}")
    print(f"=> {'PASS' if worst <= args.tol else 'FAIL'} (tolerance {args.tol:g})")
    return 0 if worst <= args.tol else 1


def cmd_adjoint_residual(args) -> int:
    spec = _spec_from_args(args)
    times = [float(t) for t in args.times.split(",")]
    n_values = [int(n) for n in args.n_list.split(",")]
    mesh = Torus(1, args.mesh)
    transport = compute_transport(spec)
    alpha0 = transport.alpha0
    v0 = sample_field(mesh, make_field("cos_k", k=1))
    diffusivity = [transport.diffusivity[j][j](alpha0) for j in range(spec.d)]
    traj = burgers_solve(
        v0, mesh, diffusivity, list(transport.sigma_dd_alpha0), list(spec.drift),
        t_end=max(times), snapshot_times=times,
    )
    from .pde import burgers_rhs_factory

    rhs = burgers_rhs_factory(mesh, diffusivity, list(transport.sigma_dd_alpha0), list(spec.drift))
    rows = ["n,t,max_residual,bound"]
    for n in n_values:
        torus = Torus(1, n)
        scaling = ScalingPlan.from_epsilon_rule(1, n, args.eps_rule)
        for t in times:
            v_t = downsample(traj.at(t), mesh, torus)
            dvdt = downsample(rhs(traj.at(t)), mesh, torus)
            _, report = residual_field(spec, scaling, v_t, dvdt, t, alpha0=alpha0, torus=torus)
            rows.append(
                f"{n},{t:.17g},{report.max_residual:.17g},{report.bound:.17g}"
            )
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_pde_solve(args) -> int:
    spec = _spec_from_args(args)
    times = [float(t) for t in args.times.split(",")]
    v0_field = make_field(args.v0, k=args.k, amplitude=args.amplitude)
    if args.kind == "burgers":
        torus = Torus(spec.d, args.n)
        transport = compute_transport(spec)
        alpha0 = transport.alpha0
        traj = burgers_solve(
            sample_field(torus, v0_field),
            torus,
            [transport.diffusivity[j][j](alpha0) for j in range(spec.d)],
            list(transport.sigma_dd_alpha0),
            list(spec.drift),
            t_end=max(times),
            snapshot_times=times,
        )
    else:
        scaling = ScalingPlan.from_epsilon_rule(spec.d, args.n, args.eps_rule)
        torus = Torus(spec.d, args.n)
        traj = semidiscrete_solve(
            spec, sample_field(torus, v0_field), scaling,
            t_end=max(times), snapshot_times=times,
        )
    traj.dump_csv(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_exact_check(args) -> int:
    spec = _spec_from_args(args)
    torus = Torus(spec.d, args.n)
    scaling = ScalingPlan(d=spec.d, n=args.n, a_n=args.a_n or float(np.sqrt(args.n)))
    checks: list[tuple[str, bool, str]] = []

    gen_both = build_generator(spec, torus, scaling, parts="both")
    gen_sym = build_generator(spec, torus, scaling, parts="S")
    row_defect = float(np.max(np.abs(np.asarray(gen_both.matrix.sum(axis=1)).ravel())))
    checks.append(("generator rows sum to zero", row_defect <= 1e-8, f"defect {row_defect:.2e}"))

    prof = DensityProfile.constant(torus, 0.5)
    nu = product_measure_vector(prof)
    stat_defect = float(np.max(np.abs(nu @ gen_both.matrix)))
    checks.append(("homogeneous measures stationary", stat_defect <= 1e-8 * gen_both.matrix.data.max(), f"defect {stat_defect:.2e}"))

    db = detailed_balance_defect(gen_sym, prof)
    checks.append(("symmetric part detailed balance", db <= 1e-10 * gen_sym.matrix.data.max(), f"defect {db:.2e}"))

    adj = adjoint_apply_one(gen_both, prof)
    checks.append(("adjoint at constant profile vanishes", float(np.max(np.abs(adj))) <= 1e-8, f"max {np.max(np.abs(adj)):.2e}"))

    x = np.arange(torus.size)
    prof2 = DensityProfile(torus, 0.5 + 0.1 * np.cos(2 * np.pi * (x % args.n) / args.n))
    expansion = adjoint_one(spec, prof2, scaling)
    oracle = adjoint_apply_one(gen_both, prof2)
    dev = max(
        abs(expansion.evaluate(config) - oracle[config_index(config)])
        for config in all_configurations(torus)
    )
    checks.append(("expansion matches matrix adjoint", dev <= 1e-10, f"max dev {dev:.2e}"))

    out = evolve(gen_both, nu, [0.05])
    drift = float(np.max(np.abs(out[0] - nu)))
    checks.append(("evolution fixes stationary law", drift <= 1e-8, f"drift {drift:.2e}"))

    ok = True
    for name, passed, detail in checks:
        ok &= passed
        print(f"[{'ok' if passed else 'FAIL'}] {name} ({detail})")
    print("=> " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        doc = yaml.safe_load(fh)
    spec = resolve_spec(doc["spec"])
    torus = Torus(int(doc["d"]), int(doc["n"]))
    scaling = ScalingPlan.from_epsilon_rule(int(doc["d"]), int(doc["n"]), str(doc["epsilon_rule"]))
    profile = resolve_profile(torus, doc["initial_profile"], default_epsilon=scaling.epsilon)
    replicas = int(doc.get("replicas", 1))
    seed = int(doc.get("seed", 0))
    times = [float(t) for t in doc["snapshot_times"]]
    initial = np.stack([sample_product(profile, seed=seed, stream=r) for r in range(replicas)])
    result = simulate_ensemble(spec, initial, torus, scaling, times, seed=seed)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "snapshots.csv", "w", newline="") as fh:
        fh.write("replica,t,site,occupancy\n")
        for r in range(replicas):
            for k, t in enumerate(result.snapshot_times):
                for site in range(torus.size):
                    fh.write(f"{r},{t:.17g},{site},{int(result.snapshots[r, k, site])}\n")
    with open(outdir / "mean_occupancy.csv", "w", newline="") as fh:
        fh.write("t,site,mean_occupancy\n")
        mean = result.mean_occupancy()
        for k, t in enumerate(result.snapshot_times):
            for site in range(torus.size):
                fh.write(f"{t:.17g},{site},{mean[k, site]:.17g}\n")
    print(f"wrote {outdir}/snapshots.csv ({int(result.n_events.sum())} events)")
    return 0


def cmd_experiment_run(args) -> int:
    config = load_experiment_config(args.config)
    result = run_experiment(config, outdir=args.out)
    print("\n".join(result.summary_lines()))
    print(f"wrote results under {args.out}")
    return 0


def cmd_experiment_report(args) -> int:
    lines = report_lines(Path(args.run), sigmas=args.sigmas)
    print("\n".join(lines))
    return 0 if lines[-1].startswith("=> PASS") else 1


def cmd_scaling_check(args) -> int:
    plan = ScalingPlan.from_epsilon_rule(args.d, args.n, args.eps_rule)
    report = scaling_check(plan)
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


def cmd_throughput(args) -> int:
    rate, events = throughput_estimate(n=args.n, t_end=args.t_end)
    print(f"{rate:.3e} events/second over {events} events (advisory target 1e7)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wasep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    rates = sub.add_parser("rates", help="rate-spec operations").add_subparsers(dest="sub", required=True)
    validate = rates.add_parser("validate", help="structural validation report")
    _add_spec_arguments(validate)
    validate.add_argument("--n", type=int, default=None, help="validate after wrapping on this torus")
    validate.set_defaults(func=cmd_rates_validate)

    coeffs = sub.add_parser("coeffs", help="transport coefficient table")
    _add_spec_arguments(coeffs)
    coeffs.add_argument("--grid", type=int, default=11)
    coeffs.set_defaults(func=cmd_coeffs)

    adj = sub.add_parser("adjoint", help="adjoint expansion checks").add_subparsers(dest="sub", required=True)
    check = adj.add_parser("check", help="expansion vs matrix adjoint")
    _add_spec_arguments(check)
    check.add_argument("--n", type=int, default=5)
    check.add_argument("--a-n", type=float, default=None)
    check.add_argument("--amplitude", type=float, default=0.1)
    check.add_argument("--tol", type=float, default=1e-10)
    check.set_defaults(func=cmd_adjoint_check)
    resid = adj.add_parser("residual", help="lattice defect of the continuum solution")
    _add_spec_arguments(resid)
    resid.add_argument("--n-list", default="64,128,256,512")
    resid.add_argument("--times", default="0,0.05,0.1")
    resid.add_argument("--eps-rule", default="n_pow:-0.5")
    resid.add_argument("--mesh", type=int, default=512)
    resid.add_argument("--out", default=None)
    resid.set_defaults(func=cmd_adjoint_residual)

    pde = sub.add_parser("pde", help="solver runs").add_subparsers(dest="sub", required=True)
    solve = pde.add_parser("solve")
    _add_spec_arguments(solve)
    solve.add_argument("--kind", choices=["burgers", "semidiscrete"], default="burgers")
    solve.add_argument("--n", type=int, default=256)
    solve.add_argument("--times", default="0.05,0.1")
    solve.add_argument("--v0", default="cos_k")
    solve.add_argument("--k", type=int, default=1)
    solve.add_argument("--amplitude", type=float, default=1.0)
    solve.add_argument("--eps-rule", default="n_pow:-0.5")
    solve.add_argument("--out", default="trajectory.csv")
    solve.set_defaults(func=cmd_pde_solve)

    exact = sub.add_parser("exact", help="brute-force oracle battery").add_subparsers(dest="sub", required=True)
    check2 = exact.add_parser("check")
    _add_spec_arguments(check2)
    check2.add_argument("--n", type=int, default=4)
    check2.add_argument("--a-n", type=float, default=None)
    check2.set_defaults(func=cmd_exact_check)

    sim = sub.add_parser("simulate", help="event-driven ensemble run")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    exp = sub.add_parser("experiment", help="defect-field experiments").add_subparsers(dest="sub", required=True)
    run = exp.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_experiment_run)
    rep = exp.add_parser("report")
    rep.add_argument("--run", required=True)
    rep.add_argument("--sigmas", type=float, default=3.0)
    rep.set_defaults(func=cmd_experiment_report)

    scal = sub.add_parser("scaling", help="regime condition report")
    scal.add_argument("--d", type=int, default=1)
    scal.add_argument("--n", type=int, default=128)
    scal.add_argument("--eps-rule", default="n_pow:-0.5")
    scal.set_defaults(func=cmd_scaling_check)

    perf = sub.add_parser("throughput", help="advisory events/second probe")
    perf.add_argument("--n", type=int, default=512)
    perf.add_argument("--t-end", type=float, default=0.01)
    perf.set_defaults(func=cmd_throughput)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
