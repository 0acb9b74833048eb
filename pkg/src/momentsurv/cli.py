"""Command-line front end: simulation, fitting, moment approximation, plots.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "momentsurv"
import matplotlib.pyplot as plt  # noqa: E402

from . import functionals, jacobi  # noqa: E402
from .gibbs import ChainConfig, run_chain  # noqa: E402
from .hazard import SurvivalDataset  # noqa: E402
from .moments import read_moments_csv  # noqa: E402

__all__ = [
    "RunConfig",
    "simulate_weibull",
    "load_dataset",
    "write_dataset",
    "run_fit",
    "run_approx",
    "main",
]

_FMT = "%.12g"
_SVG_META = {"Date": None}


@dataclasses.dataclass
class RunConfig:
    M: float = 6.0
    q: int = 50
    N: int = 10
    L: int = 10000
    burn_in: int = 5000
    thin: int = 5
    seed: int = 0
    mh_step: float = 0.5
    p0_rate: float = 3.0
    prior_c_shape: float = 1.0
    prior_c_rate: float = 1.0 / 3.0
    prior_beta_shape: float = 1.0
    prior_beta_rate: float = 1.0 / 3.0
    level: float = 0.95
    n_sim: int = 1000
    plots: bool = True
    truth_weibull: tuple = None  # optional (shape, scale) overlay

    _SECTIONS = {
        "model": ("p0_rate", "prior_c_shape", "prior_c_rate", "prior_beta_shape",
                  "prior_beta_rate"),
        "chain": ("L", "burn_in", "thin", "seed", "mh_step"),
        "grid": ("M", "q", "N"),
        "io": ("level", "n_sim", "plots", "truth_weibull"),
    }

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        kwargs = {}
        for section, keys in cls._SECTIONS.items():
            block = raw.pop(section, {})
            if not isinstance(block, dict):
                raise ValueError(f"config section {section!r} must be an object")
            for key, val in block.items():
                if key not in keys:
                    raise ValueError(f"unknown key {key!r} in config section {section!r}")
                kwargs[key] = val
        if raw:
            raise ValueError(f"unknown config sections: {sorted(raw)}")
        cfg = cls(**kwargs)
        if cfg.truth_weibull is not None:
            cfg.truth_weibull = tuple(float(v) for v in cfg.truth_weibull)
        cfg.validate()
        return cfg

    def validate(self):
        if self.M <= 0:
            raise ValueError("grid horizon M must be positive")
        if self.q < 2:
            raise ValueError("grid size q must be at least 2")
        if not 2 <= self.N <= 30:
            raise ValueError("number of moments N must lie in [2, 30]")

    def chain_config(self):
        return ChainConfig(
            M=self.M, L=self.L, burn_in=self.burn_in, thin=self.thin, q=self.q,
            N=self.N, seed=self.seed, p0_rate=self.p0_rate,
            prior_c_shape=self.prior_c_shape, prior_c_rate=self.prior_c_rate,
            prior_beta_shape=self.prior_beta_shape, prior_beta_rate=self.prior_beta_rate,
            mh_step=self.mh_step,
        )


def simulate_weibull(n, shape=2.0, scale=2.0, seed=0):
    """Exact (uncensored) draws with survival exp(-(t/scale)^shape)."""
    if n < 1:
        raise ValueError("need at least one draw")
    if shape <= 0 or scale <= 0:
        raise ValueError("Weibull parameters must be positive")
    rng = np.random.default_rng(seed)
    times = scale * rng.weibull(shape, size=n)
    return SurvivalDataset(times, np.ones(n, dtype=bool))


def load_dataset(path):
    """CSV with header `time,event`; event 1 = exact, 0 = censored."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "time,event":
            raise ValueError(f"expected header 'time,event', got {header!r}")
        times, events = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"malformed row on line {lineno}: {line!r}")
            try:
                t = float(parts[0])
                e = int(parts[1])
            except ValueError:
                raise ValueError(f"unparseable row on line {lineno}: {line!r}") from None
            if e not in (0, 1):
                raise ValueError(f"event must be 0 or 1 on line {lineno}")
            if t <= 0:
                raise ValueError(f"nonpositive time on line {lineno}")
            times.append(t)
            events.append(bool(e))
    if not times:
        raise ValueError(f"no observations in {path}")
    return SurvivalDataset(np.asarray(times), np.asarray(events))


def write_dataset(data, path):
    with open(path, "w") as fh:
        fh.write("time,event\n")
        for t, e in zip(data.times, data.events):
            fh.write(f"{_FMT % t},{int(e)}\n")


def _write_summary_csv(summary, path):
    cols = ("t", "mean", "median", "mode", "lo", "hi", "marginal_lo", "marginal_hi", "km")
    arr = np.column_stack([
        summary.t_grid, summary.mean, summary.median, summary.mode, summary.lo,
        summary.hi, summary.marginal_lo, summary.marginal_hi, summary.km,
    ])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in arr:
            fh.write(",".join(_FMT % v for v in row) + "\n")


def _write_median_json(summary, path):
    payload = {
        "m_hat": summary.m_hat,
        "m_interval": {
            "lo": summary.m_interval.lo, "hi": summary.m_interval.hi,
            "lo_open": summary.m_interval.lo_open, "hi_open": summary.m_interval.hi_open,
        },
        "m_hat_m": summary.m_hat_m,
        "m_marginal_interval": {
            "lo": summary.m_marginal_interval.lo, "hi": summary.m_marginal_interval.hi,
            "lo_open": summary.m_marginal_interval.lo_open,
            "hi_open": summary.m_marginal_interval.hi_open,
        },
        "m_hat_e": {"value": summary.m_hat_e.value, "open_ended": summary.m_hat_e.open_ended},
        "c": [float(_FMT % v) for v in summary.c],
        "level": summary.level,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _truth_curve(cfg, t):
    if cfg.truth_weibull is None:
        return None
    shape, scale = cfg.truth_weibull
    return np.exp(-((t / scale) ** shape))


def _fit_plots(summary, data, cfg, out_dir):
    t = summary.t_grid
    truth = _truth_curve(cfg, t)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 4))
    grid = np.linspace(0, t[-1], 400)
    ax.step(grid, functionals.kaplan_meier(data).evaluate(grid), where="post",
            color="green", label="Kaplan-Meier")
    if truth is not None:
        ax.plot(t, truth, color="red", label="truth")
    ax.set_xlabel("t")
    ax.set_ylabel("S(t)")
    ax.legend()
    p = os.path.join(out_dir, "fit_km.svg")
    fig.savefig(p, metadata=_SVG_META)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(t, summary.lo, "k-", lw=0.8, label="credible")
    ax.plot(t, summary.hi, "k-", lw=0.8)
    ax.plot(t, summary.marginal_lo, "b--", lw=0.8, label="marginal")
    ax.plot(t, summary.marginal_hi, "b--", lw=0.8)
    if truth is not None:
        ax.plot(t, truth, color="red", label="truth")
    ax.set_xlabel("t")
    ax.set_ylabel("S(t)")
    ax.legend()
    p = os.path.join(out_dir, "fit_intervals.svg")
    fig.savefig(p, metadata=_SVG_META)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(t, summary.mean, "k-", label="posterior mean")
    ax.plot(t, summary.lo, "k-", lw=0.6)
    ax.plot(t, summary.hi, "k-", lw=0.6)
    if truth is not None:
        ax.plot(t, truth, color="red", label="truth")
    # posterior density of the median survival time from its gridded CDF
    dens = np.gradient(summary.c, t)
    scale = dens.max()
    if scale > 0:
        ax.plot(t, dens / scale, color="blue", lw=0.9, label="median posterior (scaled)")
    ax.set_xlabel("t")
    ax.set_ylabel("S(t)")
    ax.legend()
    p = os.path.join(out_dir, "fit_posterior.svg")
    fig.savefig(p, metadata=_SVG_META)
    plt.close(fig)
    paths.append(p)
    return paths


def run_fit(data, cfg, out_dir):
    """Full pipeline: chain, per-t posteriors, summaries, files, plots."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    stage = "chain"
    try:
        grid = run_chain(data, cfg.chain_config())
        stage = "posteriors"
        summary = functionals.posterior_summary(
            grid, data, level=cfg.level, n_sim=cfg.n_sim, seed=cfg.seed
        )
        stage = "outputs"
        p = os.path.join(out_dir, "summary.csv")
        _write_summary_csv(summary, p)
        written.append(p)
        p = os.path.join(out_dir, "median.json")
        _write_median_json(summary, p)
        written.append(p)
        p = os.path.join(out_dir, "diagnostics.json")
        with open(p, "w") as fh:
            json.dump(summary.diagnostics, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(p)
        if cfg.plots:
            stage = "plots"
            written.extend(_fit_plots(summary, data, cfg, out_dir))
    except Exception as exc:
        for path in written:
            if os.path.exists(path):
                os.unlink(path)
        raise RuntimeError(f"fit aborted during stage {stage!r}: {exc}") from exc
    return summary


def run_approx(moments_path, out_prefix, n_moments=None, n_sim=1000, grid_size=200,
               seed=0, plot=True):
    """Moment-file front end to the density reconstruction."""
    moments = read_moments_csv(moments_path)
    xgrid = np.linspace(0.0, 1.0, grid_size)
    res = jacobi.momentify(moments, n_moments=n_moments, n_sim=n_sim, xgrid=xgrid, seed=seed)
    written = []
    try:
        p = f"{out_prefix}_density.csv"
        with open(p, "w") as fh:
            fh.write("x,f\n")
            for x, f in zip(res.xgrid, res.approx_density):
                fh.write(f"{_FMT % x},{_FMT % f}\n")
        written.append(p)
        p = f"{out_prefix}_sample.csv"
        with open(p, "w") as fh:
            fh.write("s\n")
            for s in res.psample:
                fh.write(f"{_FMT % s}\n")
        written.append(p)
        if plot:
            fig, ax = plt.subplots(figsize=(5, 4))
            ax.hist(res.psample, bins=30, density=True, alpha=0.3, color="grey")
            ax.plot(res.xgrid, res.approx_density, "k-", label="approximation")
            ax.set_xlabel("s")
            ax.set_ylabel("density")
            ax.legend()
            p = f"{out_prefix}_density.svg"
            fig.savefig(p, metadata=_SVG_META)
            plt.close(fig)
            written.append(p)
    except Exception:
        for path in written:
            if os.path.exists(path):
                os.unlink(path)
        raise
    return res


def _build_parser():
    parser = argparse.ArgumentParser(prog="momentsurv",
                                     description="Moment-based Bayesian survival inference")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate uncensored Weibull survival data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--name", default="dataset.csv")

    p = sub.add_parser("fit", help="run the Gibbs chain and posterior summaries")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("-M", "--horizon", type=float, default=None)
    p.add_argument("-q", "--grid-size", type=int, default=None)
    p.add_argument("-N", "--n-moments", type=int, default=None)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("approx", help="approximate a density from a moment CSV")
    p.add_argument("moments")
    p.add_argument("--n-moments", type=int, default=None)
    p.add_argument("--n-sim", type=int, default=1000)
    p.add_argument("--grid-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", default="approx")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("km", help="Kaplan-Meier estimate of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", default=".")
    return parser


def _dispatch(args):
    if args.command == "simulate":
        data = simulate_weibull(args.n, args.shape, args.scale, args.seed)
        os.makedirs(args.out_dir, exist_ok=True)
        write_dataset(data, os.path.join(args.out_dir, args.name))
        return 0
    if args.command == "fit":
        data = load_dataset(args.data)
        cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
        overrides = {
            "seed": args.seed, "L": args.iterations, "burn_in": args.burn_in,
            "thin": args.thin, "M": args.horizon, "q": args.grid_size, "N": args.n_moments,
        }
        for key, val in overrides.items():
            if val is not None:
                setattr(cfg, key, val)
        if args.no_plots:
            cfg.plots = False
        cfg.validate()
        run_fit(data, cfg, args.out_dir)
        return 0
    if args.command == "approx":
        run_approx(args.moments, args.out_prefix, n_moments=args.n_moments,
                   n_sim=args.n_sim, grid_size=args.grid_size, seed=args.seed,
                   plot=not args.no_plots)
        return 0
    if args.command == "km":
        data = load_dataset(args.data)
        km = functionals.kaplan_meier(data)
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "km.csv"), "w") as fh:
            fh.write("time,survival\n")
            for t, s in zip(km.event_times, km.values):
                fh.write(f"{_FMT % t},{_FMT % s}\n")
        return 0
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (OSError, FileNotFoundError) as exc:
        print(f"momentsurv: I/O error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"momentsurv: invalid input: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        print(f"momentsurv: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
