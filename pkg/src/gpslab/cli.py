"""Command-line experiment runner (``gps``).

Every subcommand reads one TOML config, validates it completely, then writes
CSV or JSON files into the output directory. Each file starts with a line
naming the tool version and the config hash (a ``#`` comment in CSV files, a
``provenance`` entry in JSON files). Outputs depend only on the config and
the seed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, validate
from .disorder import DisorderSpec
from .errors import BudgetError, ConfigError, GpsError, InconclusiveError, check_budget

log = logging.getLogger("gpslab")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INCONCLUSIVE = 4

SUBCOMMANDS = (
    "kernel-info", "renewal-validate", "intersection-stats", "homog-scan",
    "quenched-scan", "second-moment-scan", "certificate", "oracle-suite",
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return x


class Outputs:
    """Collects files in memory and writes them only after success."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.header = f"gpslab {__version__} config_sha256={cfg.digest()}"
        self.files: dict[str, str] = {}

    def csv(self, name: str, columns: list[str], rows) -> None:
        buf = io.StringIO()
        buf.write(f"# {self.header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.files[name] = buf.getvalue()

    def json(self, name: str, obj: dict) -> None:
        body = {"provenance": self.header, **_jsonable(obj)}
        self.files[name] = json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            with open(out_dir / name, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)


# -- shared builders -----------------------------------------------------------

def _kernel(cfg: ExperimentConfig):
    from .kernel import SlowlyVaryingSpec, build_kernel

    kc = cfg.kernel
    try:
        sv = SlowlyVaryingSpec(kc.family, kc.c0, kc.kappa)
        return build_kernel(kc.alpha, sv, kc.t_max)
    except ValueError as e:
        raise ConfigError(f"kernel: {e}") from None


def _spec(cfg: ExperimentConfig) -> DisorderSpec:
    return DisorderSpec(cfg.model.disorder, cfg.model.master_seed)


def _gamma(cfg: ExperimentConfig) -> Fraction:
    return Fraction(cfg.model.gamma_p, cfg.model.gamma_q)


def _params(cfg: ExperimentConfig, beta: float | None = None, h: float | None = None):
    from .polymer import ModelParams

    return ModelParams(cfg.model.beta if beta is None else beta,
                       cfg.h if h is None else h, _gamma(cfg))


def _renewal_grid(cfg: ExperimentConfig, k, N: int, M: int | None = None):
    from .renewal import renewal_mass

    return renewal_mass(k, N, N if M is None else M, cfg.run.budget)


# -- subcommands -------------------------------------------------------------------

def cmd_kernel_info(cfg: ExperimentConfig, out: Outputs) -> int:
    from .kernel import half_second_factorial_moment

    k = _kernel(cfg)
    lo, hi = k.normalization_check()
    info = {
        "alpha": k.alpha, "family": k.sv.family, "c0": k.sv.c0, "kappa": k.sv.kappa,
        "t_max": k.t_max, "norm": k.norm, "norm_bracket": list(k.norm_bracket),
        "mass_bracket": [lo, hi], "mu": k.mu, "mu_bracket": list(k.mu_bracket),
        "half_second_factorial_moment": half_second_factorial_moment(k),
        "K2": k.K(2), "K3": k.K(3), "K4": k.K(4),
    }
    out.json("kernel_info.json", info)
    return EXIT_OK


def _try_fit(fit, *args):
    try:
        return fit(*args)
    except ValueError as e:
        log.warning("%s skipped: %s", fit.__name__, e)
        return None


def _attr(obj, name: str):
    return None if obj is None else getattr(obj, name)


def cmd_renewal_validate(cfg: ExperimentConfig, out: Outputs) -> int:
    from .fitting import dyadic_points
    from .renewal import fit_diagonal_exponent, fit_offdiagonal_exponent

    k = _kernel(cfg)
    Ns = sorted(cfg.run.N_list)
    N = Ns[-1]
    lo = Ns[0] if len(Ns) > 1 else max(8, N // 16)
    g = _renewal_grid(cfg, k, N)
    dfit = _try_fit(fit_diagonal_exponent, g, (lo, N))
    n_fixed = N // 4
    r_win = (max(2, N // 32), N // 2)
    ofit = _try_fit(fit_offdiagonal_exponent, g, n_fixed, r_win)
    nd = dyadic_points(lo, N)
    rd = dyadic_points(*r_win)
    rows = []
    for idx in range(max(len(nd), len(rd))):
        n = int(nd[idx]) if idx < len(nd) else None
        r = int(rd[idx]) if idx < len(rd) else None
        rows.append([
            n, float(np.exp(g.log_u[n, n])) if n is not None else None,
            r, float(np.exp(g.log_u[n_fixed, n_fixed + r])) if r is not None else None,
            _attr(dfit, "slope"), _attr(dfit, "ci_half_width"),
        ])
    out.csv("renewal.csv", ["n", "u_diag", "r", "u_offdiag", "fitted_slope", "ci"], rows)
    out.json("renewal_fits.json", {
        "diagonal": {"slope": _attr(dfit, "slope"), "ci": _attr(dfit, "ci_half_width"),
                     "window": [lo, N]},
        "offdiagonal": {"n_fixed": n_fixed, "slope": _attr(ofit, "slope"),
                        "ci": _attr(ofit, "ci_half_width"), "window": list(r_win)},
    })
    return EXIT_OK


def cmd_intersection_stats(cfg: ExperimentConfig, out: Outputs) -> int:
    from .intersection import fit_U_exponent, intersection_tables, sigma_termination_report

    k = _kernel(cfg)
    Ns = sorted(cfg.run.N_list)
    N = Ns[-1]
    t = intersection_tables(_renewal_grid(cfg, k, N))
    fitted = None
    if k.alpha > 1 and len(Ns) >= 4:
        fitted = fit_U_exponent(t, (Ns[0], N)).slope
    rows = [[n, t.U[n, n], t.tail[n], t.tail[n] * t.U[n, n], fitted] for n in Ns]
    out.csv("intersection.csv", ["N", "U_NN", "tail_N", "product", "fitted_rho"], rows)
    summary = {"alpha": k.alpha, "sigma_total_mass": t.sigma_total_mass, "clamped": t.clamped}
    if k.alpha < 1:
        rep = sigma_termination_report(t, k)
        summary.update(E_abs_sigma=list(rep.E_abs_sigma),
                       P_sigma1_finite=list(rep.P_sigma1_finite))
    out.json("intersection_summary.json", summary)
    return EXIT_OK


def cmd_homog_scan(cfg: ExperimentConfig, out: Outputs) -> int:
    from .polymer import homogeneous_critical_scan

    k = _kernel(cfg)
    g = _gamma(cfg)
    h_list = cfg.model.h_list or (cfg.h,)
    rows = []
    for N in sorted(cfg.run.N_list):
        check_budget(N, (N * g.numerator) // g.denominator, cfg.run.budget)
        scan = homogeneous_critical_scan(k, g, h_list, N, threads=cfg.run.threads)
        for h, F, flag in zip(scan.h, scan.F_N, scan.exit_flag):
            rows.append([k.alpha, g, h, N, F, flag])
    out.csv("homog.csv", ["alpha", "gamma", "h", "N", "F_N", "exit_flag"], rows)
    return EXIT_OK


def cmd_quenched_scan(cfg: ExperimentConfig, out: Outputs) -> int:
    from .polymer import annealed_quantities, quenched_free_energy

    k = _kernel(cfg)
    spec = _spec(cfg)
    p = _params(cfg)
    Ns = sorted(cfg.run.N_list)
    check_budget(Ns[-1], p.M_of(Ns[-1]), cfg.run.budget)
    est = quenched_free_energy(k, p, spec, Ns, cfg.run.replicas, cfg.run.threads)
    rows, summ = [], []
    for e in est:
        for r, v in enumerate(e.values):
            rows.append([k.alpha, p.beta, p.h, e.N, r, v])
        ann = annealed_quantities(k, p, spec, e.N)
        summ.append([k.alpha, p.beta, p.h, e.N, e.mean, e.ci, ann.annealed_F_N, e.is_lower_bound])
    out.csv("quenched.csv", ["alpha", "beta", "h", "N", "replica", "logZ_over_N"], rows)
    out.csv("quenched_summary.csv",
            ["alpha", "beta", "h", "N", "mean", "ci", "annealed_value", "is_lower_bound"], summ)
    return EXIT_OK


def cmd_second_moment_scan(cfg: ExperimentConfig, out: Outputs) -> int:
    from .intersection import intersection_tables
    from .relevance import N_beta_scaling, compute_beta1, second_moment_curve, second_moment_lambda

    k = _kernel(cfg)
    spec = _spec(cfg)
    Ns = sorted(cfg.run.N_list)
    g = float(_gamma(cfg))
    t = intersection_tables(_renewal_grid(cfg, k, Ns[-1], int(math.floor(g * Ns[-1]))))
    betas = cfg.model.beta_list or (cfg.model.beta,)
    rows = []
    for b in betas:
        lam = second_moment_lambda(spec, b)
        for N, v in zip(Ns, second_moment_curve(t, spec, b, Ns, g)):
            rows.append([k.alpha, b, lam, N, v])
    out.csv("second_moment.csv", ["alpha", "beta", "lambda", "N", "second_moment"], rows)
    summary: dict = {"alpha": k.alpha, "disorder": spec.distribution}
    if k.alpha < 1:
        b1 = compute_beta1(k, spec, t)
        summary["beta1"] = [b1.lo, b1.hi]
        summary["P_sigma1_finite"] = list(b1.P_sigma1_finite)
    else:
        summary["beta1"] = [0.0, 0.0]
        res, fit, target = N_beta_scaling(t, spec, betas, g)
        summary["N_beta"] = {repr(r.beta): {"N_beta": r.N_beta, "grid_exhausted": r.exhausted}
                             for r in res}
        summary["N_beta_slope"] = None if fit is None else fit.slope
        summary["N_beta_slope_ci"] = None if fit is None else fit.ci_half_width
        summary["predicted_slope"] = target
    out.json("second_moment.json", summary)
    return EXIT_OK


def cmd_certificate(cfg: ExperimentConfig, out: Outputs) -> int:
    from .relevance import TiltCandidate, deloc_certificate, rule_scale, tilt_schedule

    k = _kernel(cfg)
    spec = _spec(cfg)
    c = cfg.certificate
    beta = cfg.model.beta
    if c.k_scale is not None:
        ks = c.k_scale
    elif k.alpha > 1 and beta > 0:
        ks = max(1, int(round(rule_scale(k.alpha, beta, c.epsilon))))
    else:
        raise ConfigError("certificate.k_scale is required for this alpha/beta")
    if cfg.model.h is None and cfg.model.h_gap is None:
        h = -spec.log_Q(beta) + 1.0 / ks
    else:
        h = cfg.h
    check_budget(ks, ks, cfg.run.budget)
    if c.lambdas or c.ells:
        lams = c.lambdas or (min(1.0, (1 - c.delta) / c.delta),)
        ells = c.ells or (float(ks),)
        sched = [TiltCandidate(float(l), float(e), "config") for l in lams for e in ells]
    else:
        sched = tilt_schedule(k.alpha, ks, c.delta, c.epsilon, c.n_lambda)
    try:
        rep = deloc_certificate(k, spec, beta, h, c.delta, ks, _gamma(cfg), sched,
                                c.use_tilt, cfg.run.threads)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out.json("certificate.json", rep.to_json_dict())
    return EXIT_OK


def cmd_oracle_suite(cfg: ExperimentConfig, out: Outputs) -> int:
    from .oracles import run_oracle_suite

    k = _kernel(cfg)
    results = run_oracle_suite(k, cfg.model.master_seed)
    rows = [[r.name, r.value, r.tolerance, r.passed] for r in results]
    out.csv("oracle.csv", ["check", "value", "tolerance", "pass"], rows)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


HANDLERS = {
    "kernel-info": cmd_kernel_info,
    "renewal-validate": cmd_renewal_validate,
    "intersection-stats": cmd_intersection_stats,
    "homog-scan": cmd_homog_scan,
    "quenched-scan": cmd_quenched_scan,
    "second-moment-scan": cmd_second_moment_scan,
    "certificate": cmd_certificate,
    "oracle-suite": cmd_oracle_suite,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gps", description="Disordered pinning model laboratory.")
    p.add_argument("--version", action="version", version=f"gpslab {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", help="output directory (overrides run.out_dir)")
    p.add_argument("--threads", type=int, help="worker threads (overrides run.threads)")
    p.add_argument("--seed", type=int, help="master seed (overrides model.master_seed)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(subcommand: str, cfg: ExperimentConfig, out_dir: Path | None = None) -> int:
    """Execute one subcommand; files are written only when it succeeds."""
    out = Outputs(cfg)
    status = HANDLERS[subcommand](cfg, out)
    out.write(Path(out_dir or cfg.run.out_dir))
    return status


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace("model", master_seed=int(args.seed))
        if args.threads is not None:
            cfg = cfg.replace("run", threads=int(args.threads))
        if args.out is not None:
            cfg = cfg.replace("run", out_dir=str(args.out))
        validate(cfg)
        return run(args.subcommand, cfg)
    except ConfigError as e:
        print(f"gps: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as e:
        print(f"gps: budget error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except InconclusiveError as e:
        print(f"gps: inconclusive: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (GpsError, ValueError) as e:
        print(f"gps: error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
