"""Command-line front end.

Every verb reads a scenario file and writes a plot-ready table::

    fsolink outage --config scenarios/weak_hd.ini --out outage.csv
    fsolink validate --config scenarios/weak_hd.ini --format json

Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .composite import (
    _y_integral,
    irradiance_bin_probabilities,
    snr_cdf,
)
from .config import ConfigError, ScenarioConfig, load_scenario
from .errors import ConvergenceError, DegenerateTruncationError, DomainError
from .montecarlo import irradiance_histogram, mc_tmos, summarize_trials
from .tmos_acm import tmos_summary

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_VALIDATION = 3

SWEEP_COLUMNS = ("mu_db", "analytic", "mc", "mc_se", "path")
PDF_COLUMNS = ("I", "analytic_pdf", "mc_density", "abs_diff")
REPORT_COLUMNS = ("check", "tolerance", "measured", "verdict")

# z-score allowed between an analytic value and its Monte-Carlo estimate
MC_Z_LIMIT = 4.0
PDF_L1_LIMIT = 0.02
PDF_MIN_SAMPLES = 10**6


# ---------------------------------------------------------------------------
# tables


def cmd_pdf(cfg: ScenarioConfig) -> list[dict]:
    """Bin-averaged analytic irradiance density against the MC histogram."""
    m = cfg.model(cfg.mu_db[0])
    edges = np.linspace(0.0, m.pointing.A0, cfg.pdf_bins + 1)
    width = np.diff(edges)
    analytic = irradiance_bin_probabilities(m, edges) / width
    empirical = irradiance_histogram(m, cfg.mc, edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return [{"I": float(i), "analytic_pdf": float(a), "mc_density": float(e),
             "abs_diff": float(abs(a - e))}
            for i, a, e in zip(centres, analytic, empirical)]


def _sweep(cfg: ScenarioConfig, key: str, with_ber: bool) -> list[dict]:
    d = cfg.pointing()
    rows = []
    for mu_db in cfg.mu_db:
        m = cfg.model(mu_db, d)
        summary = tmos_summary(m, cfg.tmos, cfg.table, cfg.method, with_ber=with_ber)
        estimates = summarize_trials(mc_tmos(m, cfg.tmos, cfg.table, cfg.mc))
        value, est = summary[key], estimates[key]
        rows.append({
            "mu_db": mu_db,
            "analytic": float(value) if value is not None else math.nan,
            "mc": est.value if est is not None else math.nan,
            "mc_se": est.std_error if est is not None else math.nan,
            "path": value.path if value is not None else "undefined",
        })
    return rows


def cmd_outage(cfg: ScenarioConfig) -> list[dict]:
    return _sweep(cfg, "outage", with_ber=False)


def cmd_ansb(cfg: ScenarioConfig) -> list[dict]:
    return _sweep(cfg, "ansb", with_ber=False)


def cmd_ase(cfg: ScenarioConfig, per_beam: bool = False) -> list[dict]:
    """System ASE (sum over selected beams) or, with ``per_beam``, ASE per selected beam."""
    return _sweep(cfg, "ase" if per_beam else "system_ase", with_ber=False)


def cmd_ber(cfg: ScenarioConfig) -> list[dict]:
    return _sweep(cfg, "ber", with_ber=True)


# ---------------------------------------------------------------------------
# validation


def _check(report: list, name: str, tolerance: float, measured: float, ok: bool | None = None) -> None:
    if ok is None:
        ok = bool(measured <= tolerance)
    report.append({"check": name, "tolerance": float(tolerance), "measured": float(measured),
                   "verdict": "pass" if ok else "fail"})


def cmd_validate(cfg: ScenarioConfig) -> list[dict]:
    """Invariant and oracle checks for one scenario."""
    report: list[dict] = []
    d = cfg.pointing()
    m0 = cfg.model(cfg.mu_db[0], d)

    total = _y_integral(m0, 0.0, math.inf)
    _check(report, "density_normalization", 1e-6, abs(total - 1.0))

    if m0.integer_k:
        worst = 0.0
        for frac in (1e-3, 0.01, 0.1, 0.3, 0.7):
            x = m0.gamma_max * frac
            worst = max(worst, abs(snr_cdf(m0, x, "closed") - snr_cdf(m0, x, "quadrature")))
        _check(report, "cdf_closed_vs_quadrature", 1e-6, worst)

    # the histogram noise floor in L1 is about sqrt(bins / n); keep it well below the limit
    pdf_cfg = replace(cfg, mc=replace(cfg.mc, n_samples=max(cfg.mc.n_samples, PDF_MIN_SAMPLES)))
    l1 = sum(row["abs_diff"] for row in cmd_pdf(pdf_cfg)) * d.A0 / cfg.pdf_bins
    _check(report, "pdf_l1_vs_mc", PDF_L1_LIMIT, l1)

    outages, ases = [], []
    gamma_t1 = cfg.table.thresholds[0]
    for mu_db in cfg.mu_db:
        m = cfg.model(mu_db, d)
        tag = f"@mu={mu_db:g}"
        summary = tmos_summary(m, cfg.tmos, cfg.table, cfg.method)
        if summary["ase"] is None:
            continue
        sel = float(summary["selection"])
        coded = 1.0 - snr_cdf(m, max(cfg.tmos.gamma_T, gamma_t1)) if gamma_t1 < m.gamma_max else 0.0
        parts = float(summary["regions"].sum())
        _check(report, f"region_partition{tag}", 1e-6, abs(parts - coded / sel))

        estimates = summarize_trials(mc_tmos(m, cfg.tmos, cfg.table, cfg.mc))
        for key in ("outage", "ansb", "ase", "ber"):
            value, est = summary[key], estimates[key]
            if value is None or est is None:
                continue
            z = abs(float(value) - est.value) / est.std_error if est.std_error > 0 else (
                0.0 if abs(float(value) - est.value) < 1e-12 else math.inf)
            _check(report, f"mc_{key}{tag}", MC_Z_LIMIT, z)
        if summary["ber"] is not None:
            _check(report, f"ber_below_target{tag}", 1.1 * cfg.table.target_ber, float(summary["ber"]))
        _check(report, f"ase_bound{tag}", float(cfg.table.rates[-1]), float(summary["ase"]))
        if summary["outage"] is not None:
            outages.append(float(summary["outage"]))
        ases.append(float(summary["ase"]))

    rise = max((b - a for a, b in zip(outages, outages[1:])), default=0.0)
    _check(report, "outage_nonincreasing_in_mu", 1e-9, max(rise, 0.0))
    drop = max((a - b for a, b in zip(ases, ases[1:])), default=0.0)
    _check(report, "ase_nondecreasing_in_mu", 1e-9, max(drop, 0.0))
    return report


# ---------------------------------------------------------------------------
# output


def _format_value(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def render(rows: list[dict], columns, fmt: str) -> str:
    if fmt == "json":
        clean = [{c: (None if isinstance(r[c], float) and not math.isfinite(r[c]) else r[c])
                  for c in columns} for r in rows]
        return json.dumps({"columns": list(columns), "rows": clean}, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_format_value(r[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsolink",
        description="Fog and pointing-error FSO link statistics with Monte-Carlo cross-checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "pdf": "irradiance density against a Monte-Carlo histogram",
        "outage": "outage probability of the selected beam per mu",
        "ansb": "average number of selected beams per mu",
        "ase": "average spectral efficiency per mu",
        "ber": "rate-weighted average BER per mu",
        "validate": "run invariant and oracle checks",
    }
    for verb, text in helps.items():
        p = sub.add_parser(verb, help=text)
        p.add_argument("--config", required=True, metavar="PATH", help="scenario INI file")
        p.add_argument("--seed", type=int, help="override the Monte-Carlo seed")
        p.add_argument("--workers", type=int, help="override the Monte-Carlo worker count")
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        if verb == "ase":
            p.add_argument("--per-beam", action="store_true",
                           help="report ASE per selected beam instead of the system sum")
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.config)
    mc = cfg.mc
    try:
        if args.seed is not None:
            mc = replace(mc, seed=args.seed)
        if args.workers is not None:
            mc = replace(mc, workers=args.workers)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    cfg = replace(cfg, mc=mc)
    fmt = args.format or cfg.output_format
    out = args.out or cfg.output_path

    if args.verb == "pdf":
        rows, columns = cmd_pdf(cfg), PDF_COLUMNS
    elif args.verb == "validate":
        rows, columns = cmd_validate(cfg), REPORT_COLUMNS
    elif args.verb == "ase":
        rows, columns = cmd_ase(cfg, per_beam=args.per_beam), SWEEP_COLUMNS
    else:
        rows = {"outage": cmd_outage, "ansb": cmd_ansb, "ber": cmd_ber}[args.verb](cfg)
        columns = SWEEP_COLUMNS
    _emit(render(rows, columns, fmt), out)
    if args.verb == "validate" and any(r["verdict"] != "pass" for r in rows):
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, DomainError) as exc:
        print(f"fsolink: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DegenerateTruncationError, ArithmeticError) as exc:
        print(f"fsolink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
