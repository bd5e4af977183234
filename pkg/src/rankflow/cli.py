"""Command-line driver: simulate | limit | verify | convergence.

Every subcommand reads one JSON config (see :mod:`rankflow.config`) and
writes CSV artifacts into the output directory. Outputs are byte-stable
for a fixed config and seed. Exit codes: 0 success, 1 tolerance failure,
2 config or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .limit import LimitField
from .simulator import init
from . import verify as ver


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(rows) + "\n")


def _field(cfg: RunConfig) -> LimitField:
    return LimitField(cfg.profile, cfg.marginal)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    """One replica; snapshot CSV per checkpoint plus the boundary series."""
    state = init(
        cfg.profile,
        cfg.n,
        cfg.seed,
        initial_order=cfg.initial_order,
        event_override=cfg.event_override,
    )
    field = _field(cfg)
    boundary_rows = ["t,yC_emp,yC_limit"]
    for k, t in enumerate(cfg.checkpoints):
        state.advance_to(t)
        snap = state.snapshot()
        rows = ["particle,rate,y0,y,jumped"]
        for i in range(cfg.n):
            rows.append(
                f"{i + 1},{_fmt(snap.rates[i])},{_fmt(snap.y0[i])},"
                f"{_fmt(snap.y[i])},{int(snap.jumped[i])}"
            )
        _write_csv(out / f"snapshot_{k:02d}.csv", rows)
        boundary_rows.append(
            f"{_fmt(t)},{_fmt(state.boundary())},{_fmt(field.boundary(t))}"
        )
    _write_csv(out / "boundary.csv", boundary_rows)
    return 0


def _density_columns(field: LimitField) -> list[str]:
    cols = [f"p[w={w:g}]" for w in field.atom_support()]
    seen = []
    for s in field.profile.strata:
        for c in s.law.gammas:
            key = (c.shape, c.rate)
            if key not in seen:
                seen.append(key)
    for shape, rate in sorted(seen):
        cols.append(f"p[gamma({shape:g},{rate:g})]")
    return cols


def _density_weights(field: LimitField, y: float, t: float, side: str | None):
    dist = field.rate_distribution(y, t, side=side)
    support = field.atom_support()
    atoms = np.zeros(len(support))
    idx = np.searchsorted(support, dist.law.atom_rates)
    atoms[idx] = dist.law.atom_weights
    gammas = [c.weight for c in dist.law.gammas]
    return dist.regime, list(atoms) + gammas


def cmd_limit(cfg: RunConfig, out: Path) -> int:
    """Tabulate the limit objects on the configured grid."""
    field = _field(cfg)
    curve = ["t,yC"] + [f"{_fmt(t)},{_fmt(field.boundary(t))}" for t in cfg.grid_t]
    _write_csv(out / "curve.csv", curve)

    head = "y,t,t0,flow,regime,yhat,velocity"
    frows = [head]
    dcols = _density_columns(field)
    drows = ["y,t,regime,t0,yhat," + ",".join(dcols)]
    for t in cfg.grid_t:
        yc = field.boundary(t)
        for y in cfg.grid_y:
            t0 = field.boundary_time(y)
            flow = field.flow(y, t)
            on_boundary = y == yc
            if on_boundary:
                frows.append(
                    f"{_fmt(y)},{_fmt(t)},{_fmt(t0)},{_fmt(flow)},boundary,"
                    f"{_fmt(0.0)},"
                )
                for side in ("head", "tail"):
                    regime, weights = _density_weights(field, y, t, side)
                    yhat = field.initial_position(y, t) if side == "tail" else None
                    drows.append(
                        f"{_fmt(y)},{_fmt(t)},boundary_{side},"
                        f"{_fmt(t if side == 'head' else None)},{_fmt(yhat)},"
                        + ",".join(_fmt(w) for w in weights)
                    )
                continue
            regime, weights = _density_weights(field, y, t, None)
            if regime == "tail":
                yhat = field.initial_position(y, t)
                t0_col = None
            else:
                yhat = None
                t0_col = t0
            vel = field.velocity(y, t)
            frows.append(
                f"{_fmt(y)},{_fmt(t)},{_fmt(t0)},{_fmt(flow)},{regime},"
                f"{_fmt(yhat)},{_fmt(vel)}"
            )
            drows.append(
                f"{_fmt(y)},{_fmt(t)},{regime},{_fmt(t0_col)},{_fmt(yhat)},"
                + ",".join(_fmt(w) for w in weights)
            )
    _write_csv(out / "field.csv", frows)
    _write_csv(out / "density.csv", drows)
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    """Oracle-equivalence and conditional-mean suites; 0 iff all pass."""
    rows = ["check,detail,value,tolerance,pass"]
    all_ok = True

    cps = list(
        np.linspace(
            cfg.oracle_horizon / cfg.oracle_checkpoints,
            cfg.oracle_horizon,
            cfg.oracle_checkpoints,
        )
    )
    for s in range(cfg.oracle_seeds):
        seed = cfg.seed + s
        state = init(cfg.profile, cfg.oracle_n, seed)
        mismatches = 0
        reference = ver.naive_reference(cfg.profile, cfg.oracle_n, seed, cps)
        for cp, ref in zip(cps, reference):
            state.advance_to(cp)
            if not np.array_equal(state.positions(), ref):
                mismatches += 1
        ok = mismatches == 0
        all_ok &= ok
        rows.append(f"oracle_equivalence,seed={seed},{mismatches},0,{ok}")

    n = cfg.conditional_n
    anchor_ranks = [n // 10, 3 * n // 10, n // 2, 7 * n // 10, 9 * n // 10]
    pairs = [(r, t) for r in anchor_ranks for t in (0.25, 0.5, 1.0, 2.0)]
    checks = ver.conditional_mean_battery(
        cfg.profile, n, cfg.seed, pairs, cfg.conditional_replicas
    )
    excursions = sum(not c.ok for c in checks)
    cond_ok = excursions < 3  # up to two 3-sigma excursions in 20 by chance
    all_ok &= cond_ok
    for c in checks:
        rows.append(
            f"conditional_mean,i={c.particle} t={_fmt(c.t)},"
            f"{_fmt(c.simulated - c.oracle)},{_fmt(3 * c.sigma)},{c.ok}"
        )
    rows.append(f"conditional_mean_excursions,total,{excursions},2,{cond_ok}")

    state = init(cfg.profile, cfg.n, cfg.seed)
    state.advance_to(1.0)
    dist = ver.ks_distance(state.snapshot(), None, cfg.grid_y)
    tol = 1.5 / np.sqrt(cfg.n) + 1.0 / cfg.n
    ks_ok = dist <= tol
    all_ok &= ks_ok
    rows.append(f"ks_distance,t=1,{_fmt(dist)},{_fmt(tol)},{ks_ok}")

    _write_csv(out / "verify_report.csv", rows)
    print("\n".join(rows))
    return 0 if all_ok else 1


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    """Replica convergence study; 0 iff every tolerance and slope passes."""
    field = _field(cfg)
    report = ver.convergence_study(
        field,
        cfg.profile,
        cfg.ns,
        cfg.replicas,
        cfg.grid_y,
        cfg.grid_t,
        seed=cfg.seed,
        exclusion=cfg.exclusion,
        flow_points=cfg.flow_points,
        boundary_tol=cfg.boundary_tol,
        statistic_tol=cfg.statistic_tol,
        slope_band=cfg.slope_band,
        model_id=cfg.model_id,
    )
    _write_csv(out / "report.csv", report.csv_rows())
    (out / "summary.txt").write_text(report.summary() + "\n")
    print(report.summary())
    return 0 if report.passed else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rankflow",
        description="Move-to-front ranking dynamics and their large-N limit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out) if args.out is not None else cfg.out_dir
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
