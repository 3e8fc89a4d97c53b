"""Command-line pipeline around the library.

Subcommands cover the full workflow: ``simulate`` writes a synthetic market,
``stats`` turns raw bin data into lagged statistics, ``fit`` estimates a
kernel from those statistics, and ``decompose``/``spectra``/``scale``/
``score`` run the downstream analyses; ``report`` assembles plot-ready tables
and renders them to PNG.  Artifacts are plain CSV/JSON under one output root,
each stage with a manifest recording its configuration hash, seed, and input
digests.

Option values resolve in precedence order: command line, then ``XIMPACT_*``
environment variables, then the ``--config`` JSON file, then built-in
defaults.  Exit codes: 0 success, 1 usage or configuration error, 2 data or
artifact error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from . import artifacts, report
from .decomp import (
    channel_table,
    decompose,
    decomposition_table,
    model_covariance,
    split_channels,
)
from .errors import ConfigError, MissingArtifact, XImpactError
from .kernels import (
    DecayShape,
    Kernel,
    fit_factorized,
    fit_homogeneous,
    fit_nonparametric,
    score,
)
from .lagstats import compute_lag_stats, diag_mean, lag_profiles
from .panel import load_panel
from .scaling import bootstrap_scaling
from .spectra import (
    band_fraction,
    common_modes_fraction,
    eig_sym,
    marchenko_pastur_edges,
    noise_baseline,
    sector_mode_weights,
)
from .synth import (
    MarketSpec,
    block_correlation,
    exchangeable_correlation,
    simulate_market,
    write_market,
)

__all__ = ["main", "build_parser"]

log = logging.getLogger(__name__)

ENV_PREFIX = "XIMPACT_"
MODELS = ("full", "factorized", "homogeneous")
TAILS = ("zero", "extrapolate", "strict")
NORMALIZATIONS = ("global", "local", "none")


# ---------------------------------------------------------------- option glue

def _bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(part) for part in str(text).split(",") if part.strip()]


def _float_or_none(text) -> float | None:
    if text is None or str(text).strip().lower() in {"none", ""}:
        return None
    return float(text)


_REGISTRY: dict[str, dict[str, tuple]] = {}


def _register(command: str, dest: str, caster, default) -> None:
    _REGISTRY.setdefault(command, {})[dest] = (caster, default)


def _opt(parser, command, *flags, cast=str, default=None, help="", choices=None):
    dest = flags[0].lstrip("-").replace("-", "_")
    _register(command, dest, cast, default)
    text = help if default is None else f"{help} [default: {default}]"
    kwargs = {"dest": dest, "default": None, "type": cast, "help": text}
    if choices is not None:
        kwargs["choices"] = choices
    parser.add_argument(*flags, **kwargs)


def _toggle(parser, command, flag, default=False, help=""):
    dest = flag.lstrip("-").replace("-", "_")
    _register(command, dest, _bool, default)
    parser.add_argument(flag, action=argparse.BooleanOptionalAction,
                        dest=dest, default=None, help=f"{help} [default: {default}]")


def _common(parser, command):
    _opt(parser, command, "--config", cast=str,
         help="JSON file whose keys supply option defaults")
    _opt(parser, command, "--out", cast=str, default="out",
         help="artifact root directory")
    _opt(parser, command, "--seed", cast=int, default=0, help="random seed")
    _opt(parser, command, "--threads", cast=int,
         help="cap the numerical thread pool")
    _toggle(parser, command, "--verbose", default=False, help="log progress")


def _panel_options(parser, command):
    _opt(parser, command, "--input", cast=str,
         help="bin-record CSV [default: <out>/market/market.csv]")
    _opt(parser, command, "--sectors", cast=str,
         help="asset,sector CSV [default: <out>/market/sectors.csv if present]")
    _opt(parser, command, "--bin-minutes", cast=int, default=5, help="bin width")
    _opt(parser, command, "--open-skip", cast=int, default=60,
         help="minutes dropped after the session open")
    _opt(parser, command, "--close-skip", cast=int, default=30,
         help="minutes dropped before the session close")
    _opt(parser, command, "--normalization", cast=str, default="global",
         choices=list(NORMALIZATIONS), help="return/sign normalization scheme")


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="ximpact",
                     description="cross-impact kernel estimation pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic market with known truth")
    _common(p, "simulate")
    _opt(p, "simulate", "--n-assets", cast=int, default=20)
    _opt(p, "simulate", "--n-bins", cast=int, default=50_000)
    _opt(p, "simulate", "--support", cast=int, default=30,
         help="generator kernel support in lags")
    _opt(p, "simulate", "--kernel", cast=str, default="homogeneous",
         choices=["homogeneous", "sectored"], help="generator kernel family")
    _opt(p, "simulate", "--g-diag", cast=float, default=0.29,
         help="self-impact amplitude")
    _opt(p, "simulate", "--g-off", cast=float, default=0.0046,
         help="cross-impact amplitude (homogeneous)")
    _opt(p, "simulate", "--g-within", cast=float, default=0.01,
         help="within-sector cross amplitude (sectored)")
    _opt(p, "simulate", "--g-between", cast=float, default=0.003,
         help="between-sector cross amplitude (sectored)")
    _opt(p, "simulate", "--n-sectors", cast=int, default=4)
    _opt(p, "simulate", "--beta", cast=float, default=0.14, help="decay exponent")
    _opt(p, "simulate", "--tau0", cast=float, default=0.30, help="decay scale")
    _opt(p, "simulate", "--gamma", cast=_float_or_none, default=0.5,
         help="sign-memory exponent, or 'none' for white signs")
    _opt(p, "simulate", "--sign-rho", cast=float, default=0.0,
         help="cross-sectional sign correlation")
    _opt(p, "simulate", "--sign-rho-within", cast=_float_or_none,
         help="within-sector sign correlation (sectored)")
    _opt(p, "simulate", "--noise-diag", cast=_float_or_none,
         help="noise variance; default calibrates returns to unit variance")
    _opt(p, "simulate", "--noise-off", cast=float, default=0.0,
         help="noise cross covariance")
    hardness = p.add_mutually_exclusive_group()
    hardness.add_argument("--hard-signs", action="store_const", const=True,
                          dest="hard_signs", default=None,
                          help="store signs as +/-1 [default]")
    hardness.add_argument("--soft-signs", action="store_const", const=False,
                          dest="hard_signs", help="store real-valued imbalances")
    _register("simulate", "hard_signs", _bool, True)

    p = sub.add_parser("stats", help="lagged statistics from bin records")
    _common(p, "stats")
    _panel_options(p, "stats")
    _opt(p, "stats", "--tau-max", cast=int, default=30, help="largest window")
    _opt(p, "stats", "--t-lag", cast=int, default=100,
         help="largest sign-correlation lag")
    _opt(p, "stats", "--tau-min", cast=int, default=-10,
         help="most negative response lag")
    _opt(p, "stats", "--split-date", cast=str,
         help="keep only one side of this timestamp")
    _opt(p, "stats", "--split-side", cast=str, default="before",
         choices=["before", "after"])

    p = sub.add_parser("fit", help="estimate a kernel from a stats artifact")
    _common(p, "fit")
    _opt(p, "fit", "--stats", cast=str, help="stats artifact dir [default: <out>/stats]")
    _opt(p, "fit", "--model", cast=str, default="factorized", choices=list(MODELS))
    _opt(p, "fit", "--lags", cast=int, help="kernel support [default: from stats]")
    _opt(p, "fit", "--ridge", cast=float, default=1e-4,
         help="ridge for the nonparametric solve")
    _opt(p, "fit", "--beta", cast=float, help="fix the decay exponent")
    _opt(p, "fit", "--tau0", cast=float, help="fix the decay scale")

    p = sub.add_parser("decompose", help="split return covariance into impact + noise")
    _common(p, "decompose")
    _opt(p, "decompose", "--stats", cast=str)
    _opt(p, "decompose", "--fit", cast=str, help="fit artifact dir [default: discover]")
    _opt(p, "decompose", "--taus", cast=_int_list, default=[1, 5, 10],
         help="horizons, comma separated")
    _opt(p, "decompose", "--tail", cast=str, default="zero", choices=list(TAILS),
         help="sign-correlation tail handling")

    p = sub.add_parser("spectra", help="eigenmodes, noise band, shared modes")
    _common(p, "spectra")
    _opt(p, "spectra", "--stats", cast=str)
    _opt(p, "spectra", "--fit", cast=str, help="optional fit for impact-mode overlap")
    _opt(p, "spectra", "--modes", cast=_int_list, default=[1, 2, 5, 10, 20],
         help="overlap crop sizes, comma separated")
    _opt(p, "spectra", "--draws", cast=int, default=200,
         help="Monte Carlo draws for the noise floor")
    _opt(p, "spectra", "--slack", cast=float, default=0.05,
         help="relative widening of the noise-band edges")

    p = sub.add_parser("scale", help="kernel class means over random asset subsets")
    _common(p, "scale")
    _panel_options(p, "scale")
    _opt(p, "scale", "--sizes", cast=_int_list, default=[5, 10, 20, 40],
         help="subset sizes, comma separated")
    _opt(p, "scale", "--samples", cast=int, default=100, help="subsets per size")
    _opt(p, "scale", "--lags", cast=int, default=30, help="kernel support")
    _toggle(p, "scale", "--refit-shape", default=False,
            help="re-estimate the decay profile per subset")

    p = sub.add_parser("score", help="residual-variance scores of a fit on a panel")
    _common(p, "score")
    _panel_options(p, "score")
    _opt(p, "score", "--fit", cast=str, help="fit artifact dir [default: discover]")
    _opt(p, "score", "--split-date", cast=str,
         help="score before/after this timestamp separately")

    p = sub.add_parser("report", help="assemble plot-ready tables and figures")
    _common(p, "report")
    _opt(p, "report", "--fit", cast=str, help="fit artifact dir [default: discover]")

    return parser


def _resolve(command: str, args: argparse.Namespace) -> dict:
    spec = _REGISTRY[command]
    config_path = getattr(args, "config", None) or os.environ.get(ENV_PREFIX + "CONFIG")
    file_values: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")

    cfg: dict = {}
    for dest, (caster, default) in spec.items():
        value = getattr(args, dest, None)
        if value is None:
            env_key = ENV_PREFIX + dest.upper()
            if env_key in os.environ:
                try:
                    value = caster(os.environ[env_key])
                except ValueError as exc:
                    raise ConfigError(f"bad value for {env_key}: {exc}") from exc
            elif dest in file_values:
                raw = file_values[dest]
                try:
                    value = caster(raw) if isinstance(raw, str) else raw
                except ValueError as exc:
                    raise ConfigError(f"bad config value for {dest}: {exc}") from exc
            else:
                value = default
        cfg[dest] = value
    cfg["command"] = command
    return cfg


@contextmanager
def _thread_cap(limit: int | None):
    if not limit:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        os.environ.setdefault("OMP_NUM_THREADS", str(limit))
        yield
        return
    with threadpool_limits(limits=int(limit)):
        yield


# ------------------------------------------------------------------- handlers

def _manifest_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in {"verbose", "threads"}}


def _resolve_input(cfg: dict, out: Path) -> tuple[Path, Path | None]:
    market = Path(cfg["input"]) if cfg["input"] else out / "market" / "market.csv"
    artifacts.require(market, "bin-record CSV")
    if cfg["sectors"]:
        sectors = artifacts.require(Path(cfg["sectors"]), "sector table")
    else:
        candidate = out / "market" / "sectors.csv"
        sectors = candidate if candidate.exists() else None
    return market, sectors


def _load_cfg_panel(cfg: dict, out: Path):
    market, sectors = _resolve_input(cfg, out)
    panel = load_panel(
        market,
        sector_path=sectors,
        open_skip_minutes=cfg["open_skip"],
        close_skip_minutes=cfg["close_skip"],
        bin_minutes=cfg["bin_minutes"],
        normalization=cfg["normalization"],
    )
    inputs = {"market.csv": market}
    if sectors is not None:
        inputs["sectors.csv"] = sectors
    return panel, inputs


def _stats_dir(cfg: dict, out: Path) -> Path:
    return Path(cfg["stats"]) if cfg.get("stats") else out / "stats"


def _find_fit(cfg: dict, out: Path, required: bool = True) -> Path | None:
    if cfg.get("fit"):
        path = Path(cfg["fit"])
        artifacts.require(path / "fit.json", "fit artifact")
        return path
    for name in ("fit_full", "fit_factorized", "fit_homogeneous"):
        if (out / name / "fit.json").exists():
            return out / name
    if required:
        raise MissingArtifact(f"no fit artifact under {out}; run `ximpact fit` first")
    return None


def _cmd_simulate(cfg: dict) -> None:
    out = Path(cfg["out"])
    n = cfg["n_assets"]
    shape = DecayShape(beta=cfg["beta"], tau0=cfg["tau0"])
    sectors: list[str] = []
    if cfg["kernel"] == "homogeneous":
        kernel = Kernel.homogeneous(cfg["g_diag"], cfg["g_off"], n, shape, cfg["support"])
        sign_corr = exchangeable_correlation(n, cfg["sign_rho"])
    else:
        sectors = [f"S{i * cfg['n_sectors'] // n}" for i in range(n)]
        lab = np.asarray(sectors)
        same = lab[:, None] == lab[None, :]
        g_matrix = np.where(same, cfg["g_within"], cfg["g_between"])
        np.fill_diagonal(g_matrix, cfg["g_diag"])
        kernel = Kernel.factorized(g_matrix, shape, cfg["support"])
        rho_within = cfg["sign_rho_within"]
        rho_within = cfg["sign_rho"] if rho_within is None else rho_within
        sign_corr = block_correlation(sectors, rho_within, cfg["sign_rho"])
    spec = MarketSpec(
        kernel=kernel,
        n_bins=cfg["n_bins"],
        sign_gamma=cfg["gamma"],
        sign_correlation=sign_corr,
        hard_signs=cfg["hard_signs"],
        noise_diag=cfg["noise_diag"],
        noise_off=cfg["noise_off"],
        seed=cfg["seed"],
        sectors=sectors,
    )
    result = simulate_market(spec)
    market_dir = out / "market"
    write_market(result, market_dir)
    artifacts.write_manifest(market_dir, "simulate", _manifest_config(cfg),
                             seed=cfg["seed"])
    log.info("wrote %s", market_dir)


def _cmd_stats(cfg: dict) -> None:
    out = Path(cfg["out"])
    panel, inputs = _load_cfg_panel(cfg, out)
    if cfg["split_date"]:
        before, after = panel.split_at(pd.Timestamp(cfg["split_date"]))
        panel = before if cfg["split_side"] == "before" else after
    stats = compute_lag_stats(panel, tau_max=cfg["tau_max"], t_lag=cfg["t_lag"],
                              tau_min=cfg["tau_min"])
    stats_dir = out / "stats"
    artifacts.save_stats(stats, stats_dir)
    artifacts.write_csv(lag_profiles(stats), stats_dir / "profiles.csv")
    artifacts.write_manifest(stats_dir, "stats", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s (t_eff=%d)", stats_dir, stats.t_eff)


def _cmd_fit(cfg: dict) -> None:
    out = Path(cfg["out"])
    stats_dir = _stats_dir(cfg, out)
    stats = artifacts.load_stats(stats_dir)
    lags = cfg["lags"] or min(stats.tau_max, stats.t_lag + 1)
    shape = None
    if (cfg["beta"] is None) != (cfg["tau0"] is None):
        raise ConfigError("--beta and --tau0 must be supplied together")
    if cfg["beta"] is not None:
        shape = DecayShape(beta=cfg["beta"], tau0=cfg["tau0"])

    model = cfg["model"]
    if model == "full":
        kernel = fit_nonparametric(stats, lags, ridge=cfg["ridge"])
    elif model == "factorized":
        kernel = fit_factorized(stats, shape=shape, t_lag=lags)
    elif model == "homogeneous":
        kernel = fit_homogeneous(stats, shape=shape, t_lag=lags)
    else:
        raise ConfigError(f"unknown model {model!r}")
    fit_dir = out / f"fit_{model}"
    artifacts.save_kernel(kernel, fit_dir)
    artifacts.write_manifest(fit_dir, "fit", _manifest_config(cfg),
                             inputs=artifacts.artifact_files(stats_dir),
                             seed=cfg["seed"])
    log.info("wrote %s", fit_dir)


def _cmd_decompose(cfg: dict) -> None:
    out = Path(cfg["out"])
    stats_dir = _stats_dir(cfg, out)
    stats = artifacts.load_stats(stats_dir)
    fit_dir = _find_fit(cfg, out)
    kernel = artifacts.load_kernel(fit_dir)
    taus = cfg["taus"]
    decomps = decompose(kernel, stats, taus, tail=cfg["tail"])
    splits = {tau: split_channels(kernel, stats.c, tau, tail=cfg["tail"])
              for tau in taus}
    dec_dir = out / "decompose"
    artifacts.write_csv(decomposition_table(decomps), dec_dir / "decomposition.csv")
    artifacts.write_csv(channel_table(splits), dec_dir / "channels.csv")
    inputs = artifacts.artifact_files(stats_dir)
    inputs.update({f"fit/{k}": v for k, v in artifacts.artifact_files(fit_dir).items()})
    artifacts.write_manifest(dec_dir, "decompose", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s", dec_dir)


def _cmd_spectra(cfg: dict) -> None:
    out = Path(cfg["out"])
    stats_dir = _stats_dir(cfg, out)
    stats = artifacts.load_stats(stats_dir)
    spec_dir = out / "spectra"
    n = stats.n_assets

    vals_sigma, vecs_sigma = eig_sym(stats.sigma_0)
    vals_sign, _ = eig_sym(stats.c[0])
    rows = [{"matrix": "return_cov_1", "mode": k, "value": v}
            for k, v in enumerate(vals_sigma)]
    rows += [{"matrix": "sign_corr_0", "mode": k, "value": v}
             for k, v in enumerate(vals_sign)]

    q = n / stats.t_eff
    variance = diag_mean(stats.sigma_0)
    lo, hi = marchenko_pastur_edges(q, variance)
    mp = {
        "q": q,
        "variance": variance,
        "lower_edge": lo,
        "upper_edge": hi,
        "slack": cfg["slack"],
        "band_fraction": band_fraction(vals_sigma, q, variance, cfg["slack"]),
    }

    inputs = artifacts.artifact_files(stats_dir)
    fit_dir = _find_fit(cfg, out, required=False)
    if fit_dir is not None:
        kernel = artifacts.load_kernel(fit_dir)
        impact, _ = model_covariance(kernel, stats.c, 1)
        impact = 0.5 * (impact + impact.T)
        vals_imp, vecs_imp = eig_sym(impact)
        rows += [{"matrix": "impact_cov_1", "mode": k, "value": v}
                 for k, v in enumerate(vals_imp)]
        modes = [m for m in cfg["modes"] if 1 <= m <= n]
        common = []
        for m in modes:
            floor_mean, floor_se = noise_baseline(m, n, cfg["draws"], seed=cfg["seed"])
            common.append({
                "n_modes": m,
                "value": common_modes_fraction(vecs_sigma, vecs_imp, m),
                "noise_mean": floor_mean,
                "noise_se": floor_se,
            })
        artifacts.write_csv(pd.DataFrame(common), spec_dir / "common_modes.csv")
        inputs.update({f"fit/{k}": v
                       for k, v in artifacts.artifact_files(fit_dir).items()})

    artifacts.write_csv(pd.DataFrame(rows), spec_dir / "eigvals.csv")
    artifacts.write_json(mp, spec_dir / "mp.json")
    if stats.sectors:
        weights = sector_mode_weights(vecs_sigma, stats.sectors, min(10, n))
        artifacts.write_csv(weights, spec_dir / "sector_weights.csv")
    artifacts.write_manifest(spec_dir, "spectra", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s", spec_dir)


def _cmd_scale(cfg: dict) -> None:
    out = Path(cfg["out"])
    panel, inputs = _load_cfg_panel(cfg, out)
    curve = bootstrap_scaling(panel, cfg["sizes"], n_samples=cfg["samples"],
                              seed=cfg["seed"], lags=cfg["lags"],
                              refit_shape=cfg["refit_shape"])
    scale_dir = out / "scale"
    artifacts.write_csv(curve.frame(), scale_dir / "points.csv")
    artifacts.write_json(curve.fits, scale_dir / "laws.json")
    artifacts.write_manifest(scale_dir, "scale", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s", scale_dir)


def _cmd_score(cfg: dict) -> None:
    out = Path(cfg["out"])
    panel, inputs = _load_cfg_panel(cfg, out)
    fit_dir = _find_fit(cfg, out)
    kernel = artifacts.load_kernel(fit_dir)
    if cfg["split_date"]:
        before, after = panel.split_at(pd.Timestamp(cfg["split_date"]))
        payload = {
            "model": kernel.kind,
            "in_sample": score(before, kernel),
            "out_sample": score(after, kernel),
        }
    else:
        payload = {"model": kernel.kind, "full": score(panel, kernel)}
    score_dir = out / "score" / fit_dir.name
    artifacts.write_json(payload, score_dir / "score.json")
    inputs.update({f"fit/{k}": v for k, v in artifacts.artifact_files(fit_dir).items()})
    artifacts.write_manifest(score_dir, "score", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s", score_dir)


def _cmd_report(cfg: dict) -> None:
    out = Path(cfg["out"])
    report_dir = out / "report"
    profiles_path = artifacts.require(out / "stats" / "profiles.csv",
                                      "lag-statistics artifact")
    profiles = pd.read_csv(profiles_path)
    artifacts.write_csv(profiles, report_dir / "lag_profiles.csv")
    report.save_figure(report.fig_lag_profiles(profiles),
                       report_dir / "lag_profiles.png")
    assembled = ["lag_profiles"]
    inputs: dict[str, Path] = {"profiles.csv": profiles_path}

    fit_dir = _find_fit(cfg, out, required=False)
    if fit_dir is not None:
        kernel = artifacts.load_kernel(fit_dir)
        table = report.kernel_mean_table(kernel.integrated())
        artifacts.write_csv(table, report_dir / "kernel_means.csv")
        report.save_figure(report.fig_kernel_means(table),
                           report_dir / "kernel_means.png")
        assembled.append("kernel_means")
        inputs["fit/fit.json"] = fit_dir / "fit.json"

    dec_path = out / "decompose" / "decomposition.csv"
    if dec_path.exists():
        table = pd.read_csv(dec_path)
        artifacts.write_csv(table[["tau", "explained_diag", "explained_off"]],
                            report_dir / "explained.csv")
        report.save_figure(report.fig_explained(table), report_dir / "explained.png")
        assembled.append("explained")
        inputs["decomposition.csv"] = dec_path

    eig_path = out / "spectra" / "eigvals.csv"
    mp_path = out / "spectra" / "mp.json"
    if eig_path.exists() and mp_path.exists():
        eig = pd.read_csv(eig_path)
        mp = artifacts.read_json(mp_path)
        vals = eig.loc[eig["matrix"] == "return_cov_1", "value"].to_numpy()
        common_path = out / "spectra" / "common_modes.csv"
        common = pd.read_csv(common_path) if common_path.exists() else None
        if common is not None:
            artifacts.write_csv(common, report_dir / "common_modes.csv")
        report.save_figure(
            report.fig_spectrum(vals, mp["q"], mp["variance"], common),
            report_dir / "spectrum.png",
        )
        artifacts.write_csv(eig, report_dir / "eigvals.csv")
        assembled.append("spectrum")
        inputs["eigvals.csv"] = eig_path

    artifacts.write_json({"assembled": assembled}, report_dir / "sections.json")
    artifacts.write_manifest(report_dir, "report", _manifest_config(cfg),
                             inputs=inputs, seed=cfg["seed"])
    log.info("wrote %s (%s)", report_dir, ", ".join(assembled))


_HANDLERS = {
    "simulate": _cmd_simulate,
    "stats": _cmd_stats,
    "fit": _cmd_fit,
    "decompose": _cmd_decompose,
    "spectra": _cmd_spectra,
    "scale": _cmd_scale,
    "score": _cmd_score,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(args.command, args)
        logging.basicConfig(
            level=logging.INFO if cfg.get("verbose") else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        with _thread_cap(cfg.get("threads")):
            _HANDLERS[args.command](cfg)
        return 0
    except ConfigError as exc:
        print(f"ximpact: config error: {exc}", file=sys.stderr)
        return 1
    except XImpactError as exc:
        print(f"ximpact: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"ximpact: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
