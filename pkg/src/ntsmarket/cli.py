"""Command-line interface.

Subcommands: ``fit``, ``frontier``, ``asratio``, ``marginal``, ``budget`` and
``backtest``.  Option values come from flags, then an optional ``key=value``
config file (``--config``), then built-in defaults.  Exit status is 0 on
success, 2 for input errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import backtest as bt
from . import budget, estimate, frontier, io, risk
from .errors import DomainError, InputError, InvalidModelError, NtsError

log = logging.getLogger("ntsmarket")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

DEFAULTS: dict[str, Any] = {
    "kind": "prices",
    "out": ".",
    "eta": 0.01,
    "rf": 0.0,
    "nb": 51,
    "nm": 51,
    "d": 2.5e-4,
    "iters": 50,
    "measure": "CVaR",
    "driver": "nts",
    "window": 750,
    "rebalance": 10,
    "strategy": "AS-max",
    "threads": 1,
    "seed": 0,
    "start": None,
    "end": None,
    "log_level": "WARNING",
}

_CASTS: dict[str, Callable[[str], Any]] = {
    "eta": float,
    "rf": float,
    "d": float,
    "nb": int,
    "nm": int,
    "iters": int,
    "window": int,
    "rebalance": int,
    "threads": int,
    "seed": int,
}


# ---------------------------------------------------------------------------
# Configuration


def read_config(path: str) -> dict[str, Any]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS and key not in ("prices", "index", "model", "weights"):
            raise InputError(f"{path}: line {lineno}: unknown key {key!r}")
        if key in _CASTS:
            try:
                value = _CASTS[key](value)
            except ValueError:
                raise InputError(f"{path}: line {lineno}: bad value for {key}: {value!r}") from None
        out[key] = value
    return out


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if value is None:
            if key in cfg:
                setattr(args, key, cfg[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _need(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise InputError("missing required option(s): " + ", ".join("--" + m for m in missing))


def validate(args: argparse.Namespace) -> None:
    """Check numeric options against module preconditions before any work starts."""
    def check(cond: bool, msg: str) -> None:
        if not cond:
            raise InputError(msg)

    if hasattr(args, "eta"):
        check(0.0 < args.eta <= 0.5, "--eta must lie in (0, 0.5]")
    if hasattr(args, "rf"):
        check(math.isfinite(args.rf), "--rf must be finite")
    for name in ("nb", "nm"):
        if hasattr(args, name):
            check(getattr(args, name) >= 1, f"--{name} must be at least 1")
    if hasattr(args, "d"):
        check(math.isfinite(args.d) and args.d >= 0, "--d must be nonnegative")
    if hasattr(args, "iters"):
        check(args.iters >= 0, "--iters must be nonnegative")
    if hasattr(args, "window"):
        check(args.window >= 250, "--window must be at least 250")
    if hasattr(args, "rebalance"):
        check(args.rebalance >= 1, "--rebalance must be at least 1")
    if hasattr(args, "measure"):
        check(args.measure in ("VaR", "CVaR"), "--measure must be VaR or CVaR")
    if hasattr(args, "driver"):
        check(args.driver in ("nts", "gaussian"), "--driver must be nts or gaussian")
    if hasattr(args, "strategy"):
        check(args.strategy in bt.STRATEGIES, f"--strategy must be one of {', '.join(bt.STRATEGIES)}")
    if hasattr(args, "kind"):
        check(args.kind in ("prices", "returns"), "--kind must be prices or returns")
    check(args.threads >= 1, "--threads must be at least 1")
    for name in ("start", "end"):
        val = getattr(args, name, None)
        if val is not None and not isinstance(val, _dt.date):
            try:
                setattr(args, name, _dt.date.fromisoformat(str(val)))
            except ValueError:
                raise InputError(f"--{name} must be an ISO date (YYYY-MM-DD)") from None


# ---------------------------------------------------------------------------
# Helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _date_filter(panel: estimate.ReturnPanel, start, end) -> estimate.ReturnPanel:
    if start is None and end is None:
        return panel
    keep = [i for i, d in enumerate(panel.dates) if (start is None or d >= start) and (end is None or d <= end)]
    if not keep:
        raise InputError("date range selects no rows")
    return estimate.ReturnPanel(tuple(panel.dates[i] for i in keep), panel.assets, panel.returns[keep])


def _load_panel(path, kind, start=None, end=None) -> estimate.ReturnPanel:
    dates, symbols, values = estimate.read_price_csv(path)
    if kind == "prices" and (start is not None or end is not None):
        # keep one extra leading price so the first return in range survives
        idx = [i for i, d in enumerate(dates) if (start is None or d >= start) and (end is None or d <= end)]
        if not idx:
            raise InputError("date range selects no rows")
        lo = max(idx[0] - 1, 0)
        dates, values = dates[lo : idx[-1] + 1], values[lo : idx[-1] + 1]
        return estimate.panel_from_values(dates, symbols, values, kind)
    return _date_filter(estimate.panel_from_values(dates, symbols, values, kind), start, end)


def _asset_names(m) -> list[str]:
    return list(m.assets) if m.assets else [f"A{i + 1}" for i in range(m.n_assets)]


# ---------------------------------------------------------------------------
# Commands


def cmd_fit(args) -> int:
    _need(args, "prices", "index")
    panel = _load_panel(args.prices, args.kind, args.start, args.end)
    index = _load_panel(args.index, args.kind, args.start, args.end)
    panel, idx = estimate.align(panel, index)
    fit = estimate.two_step_fit(panel, idx, threads=args.threads)
    out = _out_dir(args)
    ip = fit.index_fit.params
    meta = {
        "command": "fit",
        "n_obs": panel.n_obs,
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
        "index_beta": ip.beta,
        "index_ks": fit.index_fit.ks_stat,
        "index_p_value": fit.index_fit.p_value,
        "flagged_assets": fit.flagged_assets,
    }
    io.save_model(out / "model.json", fit.model, meta)
    m = fit.model
    mean_i, std_i = float(np.mean(idx)), float(np.std(idx, ddof=1))
    rows = [["INDEX", mean_i, std_i, ip.alpha, ip.theta, ip.beta, fit.index_fit.ks_stat, fit.index_fit.p_value, fit.index_fit.at_bound]]
    for name, mu, sd, f in zip(_asset_names(m), m.mu, m.sigma, fit.asset_fits):
        rows.append([name, mu, sd, f.params.alpha, f.params.theta, f.params.beta, f.ks_stat, f.p_value, f.at_bound])
    io.write_csv(
        out / "fit_table.csv",
        ["symbol", "mean", "std", "alpha", "theta", "beta", "ks", "p_value", "at_bound"],
        rows,
    )
    print(f"fitted alpha={ip.alpha:.6g} theta={ip.theta:.6g} on {panel.n_obs} days, {panel.n_assets} assets")
    return EXIT_OK


def cmd_frontier(args) -> int:
    _need(args, "model")
    m, _ = io.load_model(args.model)
    surf = frontier.frontier_surface(m, args.nb, args.nm, threads=args.threads)
    names = _asset_names(m)
    rows = []
    for i, row in enumerate(surf.points):
        for j, pt in enumerate(row):
            w = pt.w if pt.feasible else np.full(m.n_assets, np.nan)
            rows.append([surf.b_grid[i], surf.m_grid[j], pt.feasible, pt.disp, pt.asym, pt.reward, *w])
    out = _out_dir(args)
    io.write_csv(
        out / "surface.csv",
        ["b_star", "m_star", "feasible", "disp", "asym", "reward", *[f"w_{k}" for k in names]],
        rows,
    )
    for i, j, err in surf.errors:
        print(f"cell ({i}, {j}) failed: {err}", file=sys.stderr)
    print(f"{int(surf.feasible_mask().sum())} of {len(rows)} cells feasible")
    return EXIT_NUMERIC if surf.errors else EXIT_OK


def cmd_asratio(args) -> int:
    _need(args, "model")
    m, _ = io.load_model(args.model)
    curve = frontier.as_ratio_curve(m, args.rf, args.nb)
    b_star, value, w_star = frontier.maximize_as_ratio(m, args.rf, args.nb)
    names = _asset_names(m)
    rows = []
    for b, w, s, a, r in zip(curve.b, curve.weights, curve.sharpe, curve.score, curve.ratio):
        w = np.full(m.n_assets, np.nan) if w is None else w
        rows.append([b, a, s, r, *w])
    out = _out_dir(args)
    io.write_csv(out / "curve.csv", ["b", "score", "sharpe", "as_ratio", *[f"w_{k}" for k in names]], rows)
    io.write_json(
        out / "optimum.json",
        {
            "b_star": b_star,
            "as_ratio": value,
            "sharpe": frontier.sharpe_ratio(m, w_star, args.rf),
            "score": frontier.as_score(b_star, m.alpha, m.theta),
            "r_f": args.rf,
            "weights": dict(zip(names, w_star.tolist())),
        },
    )
    print(f"AS ratio maximum {value:.6g} at b*={b_star:.6g}")
    return EXIT_OK


def cmd_marginal(args) -> int:
    _need(args, "model", "weights")
    m, _ = io.load_model(args.model)
    names = _asset_names(m)
    w = io.read_weights(args.weights, names)
    nts = risk.risk_report(m, w, args.eta)
    gau = risk.gaussian_risk_report(m.gaussian(), w, args.eta)
    cols = [nts.mct_var, nts.mct_cvar, gau.mct_var, gau.mct_cvar]
    ranks = [risk.ascending_ranks(c) for c in cols]
    rows = []
    for n, name in enumerate(names):
        row: list[Any] = [name, w[n]]
        for c, r in zip(cols, ranks):
            row += [c[n], int(r[n]), w[n] * c[n]]
        rows.append(row)
    header = ["asset", "weight"]
    for tag in ("var_nts", "cvar_nts", "var_gauss", "cvar_gauss"):
        header += [f"mct_{tag}", f"rank_{tag}", f"contrib_{tag}"]
    out = _out_dir(args)
    io.write_csv(out / "risk_table.csv", header, rows)
    io.write_json(
        out / "risk_summary.json",
        {
            "eta": args.eta,
            "var_nts": nts.var,
            "cvar_nts": nts.cvar,
            "var_gauss": gau.var,
            "cvar_gauss": gau.cvar,
            "euler_gap_nts": list(nts.euler_gap(w)),
            "euler_gap_gauss": list(gau.euler_gap(w)),
        },
    )
    print(f"VaR {nts.var:.6g} / CVaR {nts.cvar:.6g} (NTS); VaR {gau.var:.6g} / CVaR {gau.cvar:.6g} (Gaussian)")
    return EXIT_OK


def cmd_budget(args) -> int:
    _need(args, "model", "weights")
    m, _ = io.load_model(args.model)
    names = _asset_names(m)
    w0 = io.read_weights(args.weights, names)
    rets = None
    if args.prices:
        panel = _load_panel(args.prices, args.kind, args.start, args.end)
        if list(panel.assets) != names:
            missing = [a for a in names if a not in panel.assets]
            if missing:
                raise InputError(f"{args.prices}: missing assets {missing}")
            rets = np.column_stack([panel.column(a) for a in names])
        else:
            rets = panel.returns
    traj = budget.iterative_budget(m, w0, args.d, args.eta, args.iters, args.measure, args.driver, rets)
    rows = [[k, it.var, it.cvar, it.hist_var, it.hist_cvar, *it.w] for k, it in enumerate(traj.iterations)]
    out = _out_dir(args)
    io.write_csv(
        out / "trajectory.csv",
        ["iteration", "VaR_model", "CVaR_model", "VaR_hist", "CVaR_hist", *[f"w_{k}" for k in names]],
        rows,
    )
    first, last = traj.iterations[0], traj.iterations[-1]
    print(f"{args.measure} ({args.driver}-driven): VaR {first.var:.6g} -> {last.var:.6g}, CVaR {first.cvar:.6g} -> {last.cvar:.6g}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    _need(args, "prices", "index")
    panel = _load_panel(args.prices, args.kind, args.start, args.end)
    index = _load_panel(args.index, args.kind, args.start, args.end)
    panel, idx = estimate.align(panel, index)
    fixed = None
    if args.strategy == "fixed-weights":
        _need(args, "weights")
        fixed = tuple(io.read_weights(args.weights, list(panel.assets)))
    cfg = bt.BacktestConfig(
        window=args.window,
        rebalance_every=args.rebalance,
        eta=args.eta,
        r_f=args.rf,
        strategy=args.strategy,
        fixed_weights=fixed,
        n_b=args.nb,
        threads=args.threads,
    )
    res = bt.rolling_backtest(panel, idx, cfg)
    out = _out_dir(args)
    io.write_csv(
        out / "returns.csv",
        ["date", "return", "cumulative"],
        [[d.isoformat(), r, c] for d, r, c in zip(res.dates, res.returns, res.cumulative)],
    )
    io.write_csv(
        out / "weights_history.csv",
        ["date", *panel.assets],
        [[d.isoformat(), *w] for d, w in zip(res.rebalance_dates, res.weights)],
    )
    perf = bt.perf_report(res.returns, args.eta, args.rf) if res.returns.size >= 250 else None
    doc: dict[str, Any] = {
        "strategy": args.strategy,
        "window": args.window,
        "rebalance_every": args.rebalance,
        "eta": args.eta,
        "r_f": args.rf,
        "n_days": int(res.returns.size),
        "failures": [[d.isoformat(), msg] for d, msg in res.failures],
    }
    if perf is not None:
        doc["performance"] = dict(perf.rows())
        print(perf.table())
    else:
        print(f"{res.returns.size} out-of-sample days; at least 250 are needed for a performance report")
    io.write_json(out / "perf.json", doc)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file supplying option values")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--threads", type=int, help="maximum worker threads (default 1)")
    p.add_argument("--seed", type=int, help="seed recorded for reproducibility (default 0)")
    p.add_argument("--log-level", dest="log_level", help="logging level (default WARNING)")


def _data(p: argparse.ArgumentParser, index: bool = True) -> None:
    p.add_argument("--prices", help="CSV: header date,SYM1,...; one row per day")
    if index:
        p.add_argument("--index", help="CSV with a single index column, same layout")
    p.add_argument("--kind", choices=("prices", "returns"), help="cell contents (default prices)")
    p.add_argument("--start", help="first date to use (YYYY-MM-DD)")
    p.add_argument("--end", help="last date to use (YYYY-MM-DD)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntsmarket", description="NTS market model: fitting, frontiers, tail-risk budgeting and backtests."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="two-step model fit -> model.json, fit_table.csv")
    _data(p)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("frontier", help="efficient surface -> surface.csv")
    p.add_argument("--model", help="model.json from 'fit'")
    p.add_argument("--nb", type=int, help="grid points in the asymmetry floor (default 51)")
    p.add_argument("--nm", type=int, help="grid points in the reward floor (default 51)")
    _common(p)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("asratio", help="AS ratio curve and optimum -> curve.csv, optimum.json")
    p.add_argument("--model", help="model.json from 'fit'")
    p.add_argument("--rf", type=float, help="risk-free rate per period (default 0)")
    p.add_argument("--nb", type=int, help="scan points in b (default 51)")
    _common(p)
    p.set_defaults(func=cmd_asratio)

    p = sub.add_parser("marginal", help="marginal VaR/CVaR contributions -> risk_table.csv")
    p.add_argument("--model", help="model.json from 'fit'")
    p.add_argument("--weights", help="CSV with header asset,weight")
    p.add_argument("--eta", type=float, help="tail probability (default 0.01)")
    _common(p)
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("budget", help="iterative local risk budgeting -> trajectory.csv")
    p.add_argument("--model", help="model.json from 'fit'")
    p.add_argument("--weights", help="CSV with header asset,weight (starting portfolio)")
    p.add_argument("--d", type=float, help="box radius per step (default 2.5e-4)")
    p.add_argument("--iters", type=int, help="number of steps (default 50)")
    p.add_argument("--eta", type=float, help="tail probability (default 0.01)")
    p.add_argument("--measure", choices=("VaR", "CVaR"), help="risk measure to reduce (default CVaR)")
    p.add_argument("--driver", choices=("nts", "gaussian"), help="model supplying contributions (default nts)")
    _data(p, index=False)
    _common(p)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("backtest", help="rolling strategy backtest -> returns.csv, perf.json")
    _data(p)
    p.add_argument("--strategy", choices=bt.STRATEGIES, help="strategy (default AS-max)")
    p.add_argument("--weights", help="CSV with header asset,weight for fixed-weights")
    p.add_argument("--window", type=int, help="estimation window in days (default 750)")
    p.add_argument("--rebalance", type=int, help="days between rebalances (default 10)")
    p.add_argument("--eta", type=float, help="tail probability for VaR/CVaR (default 0.01)")
    p.add_argument("--rf", type=float, help="risk-free rate per day (default 0)")
    p.add_argument("--nb", type=int, help="scan points for AS-max (default 51)")
    _common(p)
    p.set_defaults(func=cmd_backtest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve(args)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
        validate(args)
        return args.func(args)
    except (InputError, InvalidModelError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NtsError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
