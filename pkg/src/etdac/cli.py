"""Command-line driver: single runs, convergence studies, bound and energy
experiments, and the singular-value / step-bound reference tables.

Subcommands: run, converge, mbp-test, energy-test, tables.  A JSON config
file supplies defaults and every flag overrides its key.  Exit codes:
0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .config import (
    ConfigError,
    build_mesh,
    build_plan,
    build_potential,
    initial_field,
    resolve_config,
)
from .diagnostics import RunReport, record, write_csv
from .grid import Field, l2_norm, max_norm, write_field_csv
from .scheme import make_nodes, make_scheme, sigma_min, tau_max, vandermonde
from .stepper import BoundExceeded, NumericalBlowup, StepContext, step

__all__ = ["main"]


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--order", type=int, help="scheme order r")
    common.add_argument("--rescaled", type=_parse_bool, metavar="BOOL", help="pointwise rescaling on/off")
    common.add_argument("--tau", type=float, help="time step")
    common.add_argument("--t-end", type=float, dest="t_end", help="final time")
    common.add_argument("--grid", type=int, help="cells per dimension (nx = ny)")
    common.add_argument("--eps", type=float, help="interfacial width")
    common.add_argument("--potential", choices=["gl", "fh"], help="double-well kind")
    common.add_argument("--theta", type=float, help="logarithmic potential temperature")
    common.add_argument("--theta-c", type=float, dest="theta_c", help="logarithmic potential critical temperature")
    common.add_argument("--kappa", type=float, help="stabilizer override (>= potential minimum)")
    common.add_argument("--nodes", choices=["uniform", "chebyshev"], help="interpolation node family")
    common.add_argument("--seed", type=int, help="random initial data seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--paper-scale", action="store_true", help="use the full 512^2 grid")
    common.add_argument("--dump-config", action="store_true", help="echo the resolved config")

    parser = argparse.ArgumentParser(prog="etdac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="integrate one trajectory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", parents=[common], help="temporal convergence study")
    p.add_argument("--taus", help="comma-separated step sizes (default 0.1/2^k, k=0..5)")
    p.add_argument("--ref", default="self_finer:8",
                   help='reference: "self_finer:K" (same scheme at finest/K) or "order_up"')
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("mbp-test", parents=[common], help="maximum-bound experiment, tau=1")
    p.set_defaults(func=cmd_mbp_test)

    p = sub.add_parser("energy-test", parents=[common], help="energy dissipation sweep")
    p.set_defaults(func=cmd_energy_test)

    p = sub.add_parser("tables", parents=[common], help="singular-value and step-bound tables")
    p.set_defaults(func=cmd_tables)
    return parser


def _split_steps(t_end: float, tau: float) -> tuple[int, float]:
    """Number of full tau steps plus the shortened remainder (0 if exact)."""
    m = int(math.floor(t_end / tau + 1e-9))
    rem = t_end - m * tau
    if rem <= 1e-9 * tau:
        rem = 0.0
    return m, rem


def _integrate(plan, potential, spec, rescaled, tau, t_end, u0, cfg_echo):
    """Run to t_end; returns (u, report, error-or-None).

    A numerical failure stops the run but keeps the completed records; the
    exception gains a step_index attribute.
    """
    if rescaled and max_norm(u0) > potential.beta + 1e-9:
        raise ConfigError(
            f"initial data has max norm {max_norm(u0):.6g}, above the bound "
            f"beta={potential.beta:.6g} required for rescaled stepping"
        )
    ctx = StepContext(plan, potential, spec, tau, rescaled=rescaled)
    report = RunReport(config=cfg_echo)
    d = record(ctx, 0, u0, None)
    report.append(d)
    prev = d.energy
    m, rem = _split_steps(t_end, tau)
    u = u0
    i = 0
    try:
        for i in range(1, m + 1):
            u, d = step(ctx, u, n=i, t=i * tau, prev_energy=prev)
            report.append(d)
            prev = d.energy
        if rem:
            i = m + 1
            ctx_last = StepContext(plan, potential, spec, rem, rescaled=rescaled)
            u, d = step(ctx_last, u, n=i, t=t_end, prev_energy=prev)
            report.append(d)
    except (BoundExceeded, NumericalBlowup) as exc:
        exc.step_index = i
        return u, report, exc
    return u, report, None


def _outdir(cfg) -> str:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(cfg, args) -> int:
    mesh = build_mesh(cfg)
    potential = build_potential(cfg)
    plan = build_plan(cfg, mesh, potential)
    spec = make_scheme(int(cfg["order"]), plan.kappa, cfg["nodes"])
    u0 = initial_field(cfg, mesh, potential)
    u, report, err = _integrate(plan, potential, spec, cfg["rescaled"], cfg["tau"], cfg["t_end"], u0, cfg)
    out = _outdir(cfg)
    write_csv(report, os.path.join(out, "diagnostics.csv"))
    write_field_csv(u, os.path.join(out, "field_final.csv"))
    if err is not None:
        raise err
    s = report.summary()
    last = report.series[-1]
    print(
        f"run: order={cfg['order']} rescaled={cfg['rescaled']} tau={cfg['tau']:g} "
        f"steps={len(report.series) - 1} t={last.t:g} energy={last.energy:.12g} "
        f"max_norm={last.max_norm:.12g} "
        f"dissipation_violation={s['first_dissipation_violation']} "
        f"mbp_violation={s['first_mbp_violation']}"
    )
    print(f"wrote {os.path.join(out, 'diagnostics.csv')} and {os.path.join(out, 'field_final.csv')}")
    return 0


def _parse_ref(spec_str: str, order: int) -> tuple[int, float | None]:
    """Returns (ref_order, finest_divider); divider None means order_up."""
    if spec_str == "order_up":
        return order + 1, None
    if spec_str.startswith("self_finer"):
        parts = spec_str.split(":")
        k = 8 if len(parts) == 1 else int(parts[1])
        if k < 1:
            raise ConfigError("self_finer divider must be >= 1")
        return order, float(k)
    raise ConfigError(f'unknown reference spec {spec_str!r}')


def cmd_converge(cfg, args) -> int:
    if args.taus:
        try:
            taus = [float(s) for s in args.taus.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --taus list: {exc}") from exc
    else:
        taus = [0.1 * 2.0**-k for k in range(6)]
    taus = sorted(taus, reverse=True)
    if len(taus) < 3:
        raise ConfigError("a convergence study needs at least 3 step sizes")
    t_end = cfg["t_end"]
    if t_end <= 0:
        raise ConfigError("t_end must be positive for a convergence study")
    for tau in taus:
        nsteps = round(t_end / tau)
        if nsteps < 1 or abs(nsteps * tau - t_end) > 1e-9 * max(1.0, t_end):
            raise ConfigError(f"tau={tau} does not divide t_end={t_end}")

    mesh = build_mesh(cfg)
    potential = build_potential(cfg)
    plan = build_plan(cfg, mesh, potential)
    order = int(cfg["order"])
    ref_order, divider = _parse_ref(args.ref, order)
    tau_ref = min(taus) if divider is None else min(taus) / divider
    u0 = initial_field(cfg, mesh, potential)

    ref_spec = make_scheme(ref_order, plan.kappa, cfg["nodes"])
    u_ref, _, err = _integrate(plan, potential, ref_spec, cfg["rescaled"], tau_ref, t_end, u0, cfg)
    if err is not None:
        raise err
    ref_linf = max_norm(u_ref)
    ref_l2 = l2_norm(u_ref)

    spec = make_scheme(order, plan.kappa, cfg["nodes"])
    rows = []
    prev_errs = None
    for tau in taus:
        u, _, err = _integrate(plan, potential, spec, cfg["rescaled"], tau, t_end, u0, cfg)
        if err is not None:
            raise err
        diff = Field(mesh, u.values - u_ref.values)
        e_linf = max_norm(diff) / ref_linf
        e_l2 = l2_norm(diff) / ref_l2
        if prev_errs is None:
            rates = (None, None)
        else:
            # an exactly-zero error (run coincides with the reference) gets
            # an infinite observed rate rather than a division error
            rates = (
                math.inf if e_linf == 0.0 else math.log2(prev_errs[0] / e_linf),
                math.inf if e_l2 == 0.0 else math.log2(prev_errs[1] / e_l2),
            )
        rows.append((tau, e_linf, rates[0], e_l2, rates[1]))
        prev_errs = (e_linf, e_l2)

    out = _outdir(cfg)
    path = os.path.join(out, "convergence.csv")
    with open(path, "w", newline="") as fh:
        fh.write("tau,linf_err,linf_rate,l2_err,l2_rate\n")
        for tau, el, rl, e2, r2 in rows:
            fh.write(f"{tau:.17g},{el:.17g},{'' if rl is None else format(rl, '.17g')},"
                     f"{e2:.17g},{'' if r2 is None else format(r2, '.17g')}\n")
    print(f"convergence: order={order} ref={'order ' + str(ref_order) if divider is None else 'self'} "
          f"tau_ref={tau_ref:g} grid={cfg['nx']}x{cfg['ny']}")
    print(f"{'tau':>12} {'Linf_err':>12} {'rate':>7} {'L2_err':>12} {'rate':>7}")
    for tau, el, rl, e2, r2 in rows:
        print(f"{tau:12.6g} {el:12.4e} {'' if rl is None else format(rl, '7.3f')} "
              f"{e2:12.4e} {'' if r2 is None else format(r2, '7.3f')}")
    print(f"wrote {path}")
    return 0


def cmd_mbp_test(cfg, args) -> int:
    if cfg["potential"]["kind"] != "fh":
        raise ConfigError("mbp-test requires the logarithmic potential (--potential fh)")
    if cfg["init"].get("kind") != "random":
        cfg = dict(cfg)
        cfg["init"] = {"kind": "random", "seed": 42, "amplitude": 1.0}
    mesh = build_mesh(cfg)
    potential = build_potential(cfg)
    plan = build_plan(cfg, mesh, potential)
    u0 = initial_field(cfg, mesh, potential)
    out = _outdir(cfg)
    steps = 100
    rc = 0
    for rescaled in (False, True):
        variant = "rescaled" if rescaled else "standard"
        for order in (3, 5, 7):
            spec = make_scheme(order, plan.kappa, cfg["nodes"])
            u, report, err = _integrate(plan, potential, spec, rescaled, 1.0, float(steps), u0, cfg)
            path = os.path.join(out, f"mbp_{variant}_r{order}.csv")
            write_csv(report, path)
            peak = max(d.max_norm for d in report.series)
            note = ""
            if err is not None:
                note = f" stopped at step {err.step_index}: {err}"
            print(f"mbp-test: {variant} r={order} completed={len(report.series) - 1}/{steps} "
                  f"peak_max_norm={peak:.12g} beta={potential.beta:.12g}{note}")
            if rescaled and (err is not None or any(not d.mbp_ok for d in report.series)):
                print(f"error: rescaled r={order} violated the maximum bound", file=sys.stderr)
                rc = 3
    print(f"wrote mbp_*.csv in {out}")
    return rc


def cmd_energy_test(cfg, args) -> int:
    cfg = dict(cfg)
    cfg["init"] = {"kind": "sinprod", "amplitude": 0.5}
    mesh = build_mesh(cfg)
    potential = build_potential(cfg)
    plan = build_plan(cfg, mesh, potential)
    u0 = initial_field(cfg, mesh, potential)
    out = _outdir(cfg)
    t_end = cfg["t_end"]
    total_violations = 0
    for order in (3, 4, 5, 6):
        bound = tau_max(order, plan.kappa, cfg["nodes"], rescaled=True)
        for tau in (0.2, 0.1, 0.01):
            spec = make_scheme(order, plan.kappa, cfg["nodes"])
            u, report, err = _integrate(plan, potential, spec, True, tau, t_end, u0, cfg)
            if err is not None:
                raise err
            violations = sum(1 for d in report.series if not d.dissipation_ok)
            total_violations += violations
            path = os.path.join(out, f"energy_r{order}_tau{tau:g}.csv")
            write_csv(report, path)
            print(f"energy-test: r={order} tau={tau:g} steps={len(report.series) - 1} "
                  f"tau_max={bound:.4g} dissipation_violations={violations} "
                  f"final_energy={report.series[-1].energy:.12g}")
    print(f"energy-test: total dissipation violations = {total_violations}")
    print(f"wrote energy_*.csv in {out}")
    return 0


def cmd_tables(cfg, args) -> int:
    out = _outdir(cfg)
    kappa = 2.0 if cfg["kappa"] is None else float(cfg["kappa"])
    p1 = os.path.join(out, "table_sigma_min.csv")
    with open(p1, "w", newline="") as fh:
        fh.write("r,kind,sigma_min\n")
        for kind in ("uniform", "chebyshev"):
            for r in range(1, 11):
                s = sigma_min(vandermonde(make_nodes(r, kind)))
                fh.write(f"{r},{kind},{s:.17g}\n")
    p2 = os.path.join(out, "table_tau_max.csv")
    with open(p2, "w", newline="") as fh:
        fh.write("r,kappa,variant,tau_max\n")
        for variant, resc in (("standard", False), ("rescaled", True)):
            for r in range(1, 11):
                tm = tau_max(r, kappa, cfg["nodes"], rescaled=resc)
                fh.write(f"{r},{kappa:.17g},{variant},{tm:.17g}\n")
    print(f"wrote {p1} and {p2}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BoundExceeded, NumericalBlowup) as exc:
        where = getattr(exc, "step_index", None)
        at = f" at step {where}" if where is not None else ""
        print(f"numerical failure{at}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
