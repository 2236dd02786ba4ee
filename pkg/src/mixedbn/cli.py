"""Command-line runner: ``mixedbn <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 failed acceptance criterion, 2 invalid config
(nothing written), 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .domain_grid import DomainError, build_grid, mask_ball, mask_box
from .forms import assemble
from .output import provenance, write_csv, write_json
from .sobolev import talenti_constant

SUBCOMMANDS = ("eigen", "sobolev-scan", "bn-linear", "bn-superlinear", "competitor-scan")


class ConvergenceFailure(RuntimeError):
    pass


@dataclass
class Outputs:
    """Files produced by one run, written only after the run finishes."""

    csv: dict = field(default_factory=dict)  # name -> (header, rows)
    json: dict = field(default_factory=dict)  # name -> object
    converged: bool = True
    messages: list = field(default_factory=list)

    def write(self, out_dir: Path, comment: str) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in self.csv.items():
            write_csv(out_dir / name, header, rows, comment)
        for name, obj in self.json.items():
            write_json(out_dir / name, obj)


def build_mask(cfg: dict):
    grid = build_grid(cfg["n"], cfg["L"], cfg["m"] if not isinstance(cfg["m"], list) else cfg["m"][0])
    return mask_for(grid, cfg["domain"])


def mask_for(grid, dom: dict):
    if dom["kind"] == "ball":
        return mask_ball(grid, dom.get("center"), dom["radius"])
    return mask_box(grid, dom["half_widths"], dom.get("center"))


def prepare(sub: str, cfg: dict) -> None:
    """Checks that need the domain or the profile; raise ConfigError."""
    from .sobolev import aubin_talenti, gagliardo_finite

    try:
        if sub in ("eigen", "bn-linear"):
            build_mask(cfg)
        elif sub == "sobolev-scan" and cfg["mode"] == "discrete":
            for m in cfg["m"]:
                mask_for(build_grid(cfg["n"], cfg["L"], m), cfg["domain"])
        elif sub == "bn-superlinear" and cfg["solve"]:
            mask_for(build_grid(cfg["n"], cfg["L"], cfg["m"]), cfg["domain"])
    except DomainError as exc:
        raise cfgmod.ConfigError(f"{sub}: {exc}") from exc
    if sub == "sobolev-scan" and cfg["mode"] == "spread_t":
        if not gagliardo_finite(aubin_talenti(cfg["n"]), cfg["s"]):
            n = cfg["n"]
            raise cfgmod.ConfigError(
                f"sobolev-scan: [U]_s is infinite for n={n}, s={cfg['s']} (finite only for s > {(4 - n) / 2:g}); "
                "the spread scan is undefined"
            )


# ---------------------------------------------------------------------------
# runners


def run_eigen(cfg: dict, seed: int) -> Outputs:
    from .spectral import EigenConvergenceError, inverse_iteration

    forms = assemble(build_mask(cfg), cfg["s"], self_cell=cfg["self_cell"])
    res = {}
    try:
        for which in cfg["which"]:
            res[which] = inverse_iteration(forms, which, tol=cfg["tol"], res_tol=cfg["res_tol"], max_iter=cfg["max_iter"])
    except EigenConvergenceError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    summary = {"s": cfg["s"], "results": [r.to_dict() for r in res.values()]}
    if {"fractional", "mixed"} <= res.keys():
        summary["fractional_below_mixed"] = res["fractional"].eigenvalue < res["mixed"].eigenvalue
    if {"fractional", "mixed", "local"} <= res.keys():
        summary["mixed_minus_sum"] = res["mixed"].eigenvalue - res["local"].eigenvalue - res["fractional"].eigenvalue
    out = Outputs()
    out.json["eigen.json"] = summary
    out.csv["eigen.csv"] = (
        ["which", "lambda", "residual", "iters"],
        [[r.which, r.eigenvalue, r.residual, r.iterations] for r in res.values()],
    )
    return out


def run_sobolev_scan(cfg: dict, seed: int) -> Outputs:
    from .fitting import loglog_fit
    from .radial import bump_profile
    from .sobolev import concentration_scan, estimate_sharp_constant

    out = Outputs()
    n, s = cfg["n"], cfg["s"]
    S = talenti_constant(n)
    header = ["parameter", "quotient", "excess", "fitted_exponent"]
    if cfg["mode"] == "discrete":
        rows, runs = [], []
        for m in cfg["m"]:
            mask = mask_for(build_grid(n, cfg["L"], m), cfg["domain"])
            forms = assemble(mask, s, self_cell=cfg["self_cell"])
            est = estimate_sharp_constant(forms, max_iter=cfg["max_iter"], gtol=cfg["gtol"])
            runs.append({"m": m, "h": mask.h, **est.to_dict()})
            out.converged &= est.converged
        fit = None
        if len(runs) >= 4:
            fit = loglog_fit([r["h"] for r in runs], [r["value"] - S for r in runs])
        for r in runs:
            rows.append([r["m"], r["value"], r["value"] - S, fit.exponent if fit else math.nan])
        out.json["sobolev_scan.json"] = {
            "mode": "discrete",
            "talenti": S,
            "runs": runs,
            "strictly_decreasing": all(b["value"] < a["value"] for a, b in zip(runs[:-1], runs[1:])),
            "fit": fit.to_dict() if fit else None,
        }
    else:
        key = "t" if cfg["mode"] == "spread_t" else "k"
        params = {"n": n, "s": s, key: cfg["values"]}
        if key == "k":
            params["profile"] = bump_profile(n, cfg["bump_radius"])
        rep = concentration_scan(cfg["mode"], params)
        rows = [[x, qv, e, rep.fit.exponent] for x, qv, e in zip(rep.parameters, rep.quotients, rep.excess)]
        out.json["sobolev_scan.json"] = {**rep.to_dict(), "talenti": S, "expected_exponent": 2 * s - 2}
    out.csv["sobolev_scan.csv"] = (header, rows)
    return out


def auto_lambda_grid(lambda_1s: float, lambda_1: float, cfg: dict) -> list[float]:
    """Plateau samples up to lambda_1s, window samples up to lambda_1, then beyond."""
    plateau = np.linspace(lambda_1s / cfg["plateau_samples"], lambda_1s, cfg["plateau_samples"])
    window = np.linspace(lambda_1s, lambda_1, cfg["window_samples"])[1:]
    beyond = [f * lambda_1 for f in cfg["super_fractions"]]
    return sorted(set([float(x) for x in plateau] + [float(x) for x in window] + beyond))


def linear_experiment(cfg: dict, seed: int) -> dict:
    """Everything the bn-linear subcommand and the acceptance check need."""
    from .linear_bn import ExtractionError, extract_solution, trace_curve
    from .sobolev import estimate_sharp_constant
    from .spectral import first_eigen_fractional, first_eigen_mixed

    forms = assemble(build_mask(cfg), cfg["s"], self_cell=cfg["self_cell"])
    e1 = first_eigen_mixed(forms)
    e1s = first_eigen_fractional(forms)
    sharp = estimate_sharp_constant(forms)
    lams = cfg["lambdas"] or auto_lambda_grid(e1s.eigenvalue, e1.eigenvalue, cfg)
    curve = trace_curve(
        forms,
        lams,
        lambda_1=e1.eigenvalue,
        lambda_1s=e1s.eigenvalue,
        plateau_reference=sharp.value,
        plateau_tol=cfg["plateau_tol"],
        eigen=e1,
        warm_start=cfg["warm_start"],
        keep_minimizers=True,
        max_iter=cfg["max_iter"],
    )
    window = [i for i, r in enumerate(curve.regimes) if r == "window"]
    idx = cfg["extract_at"] if cfg["extract_at"] is not None else (window[0] if window else None)
    extraction = None
    if idx is not None and idx < len(lams):
        try:
            sol = extract_solution(curve.values[idx], curve.minimizers[idx], forms, lams[idx], lambda_1=e1.eigenvalue, seed=seed)
            extraction = {"ok": True, **sol.to_dict()}
        except ExtractionError as exc:
            extraction = {"ok": False, "lambda": lams[idx], "error": str(exc)}
    refusals = []
    for i, lam in enumerate(lams):
        if lam >= e1.eigenvalue:
            try:
                extract_solution(curve.values[i], curve.minimizers[i], forms, lam, lambda_1=e1.eigenvalue, seed=seed)
                refusals.append({"lambda": lam, "refused": False})
            except ExtractionError as exc:
                refusals.append({"lambda": lam, "refused": True, "error": str(exc)})
    return {
        "forms": forms,
        "lambda_1": e1,
        "lambda_1s": e1s,
        "sharp": sharp,
        "curve": curve,
        "extraction": extraction,
        "refusals": refusals,
    }


def run_bn_linear(cfg: dict, seed: int) -> Outputs:
    ex = linear_experiment(cfg, seed)
    curve = ex["curve"]
    out = Outputs(converged=all(curve.converged) and ex["sharp"].converged)
    out.csv["bn_linear.csv"] = (
        ["lambda", "s_value", "residual", "iters", "regime_label"],
        [list(r) for r in zip(curve.lambdas, curve.values, curve.grad_norms, curve.iterations, curve.regimes)],
    )
    out.json["bn_linear.json"] = {
        **curve.to_dict(),
        "sharp_constant_estimate": ex["sharp"].value,
        "max_increase": curve.max_increase(),
        "extraction": ex["extraction"],
        "refusals": ex["refusals"],
    }
    return out


def eps_grid(cfg: dict) -> list[float]:
    from .mountain_pass import dyadic_eps

    if cfg["eps"] is not None:
        return sorted(cfg["eps"], reverse=True)
    return dyadic_eps(cfg["r"], cfg["eps_kmin"], cfg["eps_kmax"], cfg["eps_step"])


def run_bn_superlinear(cfg: dict, seed: int) -> Outputs:
    from .mountain_pass import dichotomy_scan, solve_superlinear, threshold

    rep = dichotomy_scan(cfg["s"], cfg["n"], cfg["p"], eps_grid(cfg), cfg["lambdas"], cfg["r"])
    out = Outputs()
    cols = ["s", "n", "p", "eps", "lambda", "A", "C", "t_star", "sup", "threshold", "verdict"]
    out.csv["bn_superlinear.csv"] = (cols, [[r.to_dict()[c] for c in cols] for r in rep.reports])
    summary = rep.to_dict()
    if cfg["solve"]:
        mask = mask_for(build_grid(cfg["n"], cfg["L"], cfg["m"]), cfg["domain"])
        forms = assemble(mask, cfg["s"])
        res = solve_superlinear(forms, cfg["solve_lambda"], cfg["p"], max_iter=cfg["max_iter"], tol=cfg["tol"], seed=seed)
        summary["solution"] = {**res.to_dict(), "threshold": threshold(cfg["n"]), "below_threshold": res.energy < threshold(cfg["n"])}
        out.converged = res.converged
    out.json["bn_superlinear.json"] = summary
    if not rep.witness_found:
        out.messages.append(rep.message)
    return out


def run_competitor_scan(cfg: dict, seed: int) -> Outputs:
    from .fitting import loglog_fit
    from .mountain_pass import competitor, exponents

    n, s, r = cfg["n"], cfg["s"], cfg["r"]
    grid = eps_grid(cfg)
    comps = [competitor(e, r, s, n) for e in grid]
    ps = cfg["p"]
    header = ["eps", "A", "excess", "B", "gagliardo"] + [f"C_p{p:g}" for p in ps]
    rows = [[c.eps, c.A, c.excess, c.B, c.gagliardo] + [c.C(p) for p in ps] for c in comps]
    kfit = loglog_fit(grid[2:], [c.excess for c in comps][2:])
    fits = {}
    for p in ps:
        ex = exponents(s, n, p)
        f = loglog_fit(grid[2:], [c.C(p) for c in comps][2:])
        fits[f"{p:g}"] = {"beta": ex.beta, "beta_hat": f.to_dict()}
    out = Outputs()
    out.csv["competitor_scan.csv"] = (header, rows)
    out.json["competitor_scan.json"] = {
        "n": n,
        "s": s,
        "r": r,
        "kappa": min(2 - 2 * s, n - 2.0),
        "kappa_hat": kfit.to_dict(),
        "beta": fits,
        "max_normalization_error": max(abs(c.B - 1.0) for c in comps),
    }
    return out


RUNNERS = {
    "eigen": run_eigen,
    "sobolev-scan": run_sobolev_scan,
    "bn-linear": run_bn_linear,
    "bn-superlinear": run_bn_superlinear,
    "competitor-scan": run_competitor_scan,
}


# ---------------------------------------------------------------------------
# entry point


def bundled_configs() -> Path:
    return Path(str(resources.files("mixedbn") / "configs"))


def run(sub: str, config_path, out_root, seed: int = 0) -> int:
    try:
        cfg, digest = cfgmod.load(sub, config_path)
        prepare(sub, cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(out_root) / f"{sub}-{digest[:12]}-seed{seed}"
    try:
        outputs = RUNNERS[sub](cfg, seed)
    except ConvergenceFailure as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 3
    outputs.write(out_dir, provenance(sub, digest, seed))
    for msg in outputs.messages:
        print(msg)
    print(out_dir)
    if not outputs.converged:
        print("solver did not converge for every sample; see outputs", file=sys.stderr)
        return 3
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixedbn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("reproduce-all",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "reproduce-all", help="TOML or JSON config (config dir for reproduce-all)")
        p.add_argument("--out", default="runs", help="output root directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return 2
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=args.threads):
        if args.command == "reproduce-all":
            from .acceptance import reproduce_all

            return reproduce_all(args.config or bundled_configs(), args.out, args.seed)
        return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
