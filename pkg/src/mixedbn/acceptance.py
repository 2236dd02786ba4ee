"""Acceptance checks 1-9 and the ``reproduce-all`` driver.

Each check returns a CriterionResult whose numeric verdict depends only on the
configs and the seed. Wall-clock times are compared with the budgets and
printed, but never written to the output files, so reruns are byte-identical.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .output import provenance, write_csv, write_json


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    detail: str = ""
    budget: float = math.inf  # seconds
    runtime: float = math.nan

    @property
    def within_budget(self) -> bool:
        return self.runtime < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        note = "" if self.within_budget else " (over budget)"
        return f"criterion {self.number:2d} {status}  {self.name}  [{self.runtime:.1f} s / {self.budget:g} s]{note}  {self.detail}"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed, "detail": self.detail, "metrics": self.metrics}


def _load(config_dir, name: str, sub: str) -> dict:
    cfg, _ = cfgmod.load(sub, Path(config_dir) / name)
    return cfg


# ---------------------------------------------------------------------------


def criterion_1(config_dir=None, seed: int = 0) -> CriterionResult:
    from .radial import radial_grad_sq
    from .sobolev import aubin_talenti, paper_formula, talenti_constant

    S = talenti_constant(3)
    quot = radial_grad_sq(aubin_talenti(3)).value  # ||U||_{2*} = 1
    rel = abs(quot - S) / S
    prod = S * paper_formula(3)
    ok = rel < 1e-3 and abs(prod - 1.0) < 1e-10
    return CriterionResult(
        1, "Talenti cross-validation", ok,
        {"talenti": S, "radial_quotient": quot, "relative_gap": rel, "product_with_reciprocal_form": prod},
        f"rel gap {rel:.2e}, product-1 {prod - 1:.1e}", 5.0,
    )


def criterion_2(config_dir=None, seed: int = 0) -> CriterionResult:
    from .domain_grid import build_grid, mask_ball, sample
    from .forms import assemble, gagliardo_energy

    worst = 0.0
    rows = []
    base = mask_ball(build_grid(3, 1.5, 17), None, 1.0)
    u = sample(base, lambda x: np.exp(-np.sum(x * x, axis=1) / 0.18)).values
    for s in (0.25, 0.5, 0.75):
        g1 = gagliardo_energy(assemble(base, s), u)
        for k in (2, 4):
            mk = mask_ball(build_grid(3, 1.5 / k, 17), None, 1.0 / k)
            gk = gagliardo_energy(assemble(mk, s), u * k ** 0.5)
            err = abs(gk / g1 / k ** (2 * s - 2) - 1.0)
            worst = max(worst, err)
            rows.append({"s": s, "k": k, "ratio": gk / g1, "expected": k ** (2 * s - 2), "error": err})
    return CriterionResult(2, "Exact scaling law", worst < 1e-10, {"cases": rows, "max_error": worst}, f"max error {worst:.1e}", 10.0)


def criterion_3(config_dir, seed: int = 0) -> CriterionResult:
    from .radial import DivergentIntegralError
    from .sobolev import concentration_scan, talenti_constant

    cfg = _load(config_dir, "spread_scan.toml", "sobolev-scan")
    try:
        rep = concentration_scan("spread_t", {"n": cfg["n"], "s": cfg["s"], "t": cfg["values"]})
    except DivergentIntegralError as exc:
        return CriterionResult(
            3, "Sharp-constant limit (spread scan)", False,
            {"n": cfg["n"], "s": cfg["s"], "divergent": True},
            f"[U]_s diverges: {exc}", 60.0,
        )
    target = 2 * cfg["s"] - 2
    above = min(rep.quotients) > talenti_constant(cfg["n"])
    ok = above and abs(rep.fit.exponent - target) <= 0.1
    return CriterionResult(
        3, "Sharp-constant limit (spread scan)", ok,
        {**rep.to_dict(), "expected_exponent": target},
        f"exponent {rep.fit.exponent:.4f} vs {target}", 60.0,
    )


def criterion_4(config_dir, seed: int = 0) -> CriterionResult:
    from .cli import build_grid, mask_for
    from .forms import assemble
    from .sobolev import estimate_sharp_constant, talenti_constant

    cfg = _load(config_dir, "sharp_constant.toml", "sobolev-scan")
    S = talenti_constant(cfg["n"])
    slack = 0.05 * S
    runs = []
    for m in cfg["m"]:
        forms = assemble(mask_for(build_grid(cfg["n"], cfg["L"], m), cfg["domain"]), cfg["s"], self_cell=cfg["self_cell"])
        est = estimate_sharp_constant(forms, max_iter=cfg["max_iter"], gtol=cfg["gtol"])
        runs.append({"m": m, **est.to_dict()})
    vals = [r["value"] for r in runs]
    decreasing = all(b < a for a, b in zip(vals[:-1], vals[1:]))
    above = all(v > S - slack for v in vals)
    drops = [r["participation_drop"] for r in runs]
    ok = decreasing and above and min(drops) >= 0.30
    return CriterionResult(
        4, "Non-attainment diagnostic", ok,
        {"talenti": S, "slack": slack, "runs": runs, "strictly_decreasing": decreasing},
        "values " + ", ".join(f"{v:.4f}" for v in vals) + f"; min PR drop {min(drops):.1%}", 180.0,
    )


def criterion_5(config_dir, seed: int = 0) -> CriterionResult:
    from .cli import build_mask
    from .forms import assemble
    from .spectral import first_eigen_fractional, first_eigen_local, first_eigen_mixed

    cfg = _load(config_dir, "eigen_unit_ball.toml", "eigen")
    forms = assemble(build_mask(cfg), cfg["s"], self_cell=cfg["self_cell"])
    loc = first_eigen_local(forms).eigenvalue
    frac = first_eigen_fractional(forms).eigenvalue
    mix = first_eigen_mixed(forms).eigenvalue
    rel = abs(loc - math.pi ** 2) / math.pi ** 2
    c_local = rel <= 0.02
    c_order = frac < mix
    c_sum = mix >= loc + frac - 1e-6
    return CriterionResult(
        5, "Eigenvalue structure", c_local and c_order and c_sum,
        {
            "local": loc, "fractional": frac, "mixed": mix, "pi_squared": math.pi ** 2,
            "local_relative_error": rel, "local_within_2pct": c_local, "fractional_below_mixed": c_order,
            "mixed_superadditive": c_sum,
        },
        f"local {loc:.5f} ({rel:.2%} from pi^2), frac {frac:.4f}, mixed {mix:.4f}", 120.0,
    )


def criterion_6(config_dir, seed: int = 0) -> CriterionResult:
    from .cli import linear_experiment

    cfg = _load(config_dir, "bn_linear_small_ball.toml", "bn-linear")
    ex = linear_experiment(cfg, seed)
    c = ex["curve"]
    l1, l1s, S0 = c.lambda_1, c.lambda_1s, ex["sharp"].value
    lams = np.asarray(c.lambdas)
    vals = np.asarray(c.values)
    monotone = c.max_increase() <= 1e-6
    plateau_idx = lams <= l1s * (1 + 1e-12)
    plateau_dev = float(np.max(np.abs(vals[plateau_idx] - S0)) / S0) if plateau_idx.any() else math.inf
    cross = c.lambda_1_crossing
    cross_err = abs(cross - l1) / l1 if cross is not None else math.inf
    low = lams[plateau_idx]
    delta = float(np.max(np.diff(low))) if low.size > 1 else 0.0
    star = c.lambda_star
    star_ok = star is not None and l1s - delta <= star < l1
    extr = ex["extraction"] or {"ok": False}
    extr_ok = bool(extr.get("ok")) and extr["weak_residual"] < 1e-5
    refused = bool(ex["refusals"]) and all(r["refused"] for r in ex["refusals"])
    ok = monotone and plateau_dev <= 0.02 and cross_err <= 0.02 and star_ok and extr_ok and refused
    return CriterionResult(
        6, "Linear BN curve", ok,
        {
            **c.to_dict(), "sharp_constant_estimate": S0, "max_increase": c.max_increase(),
            "plateau_deviation": plateau_dev, "crossing_error": cross_err, "delta": delta,
            "extraction": extr, "refusals": ex["refusals"],
        },
        f"plateau dev {plateau_dev:.2%}, crossing err {cross_err:.1e}, lambda* {star}, weak res {extr.get('weak_residual', math.nan):.1e}",
        600.0,
    )


def criterion_7(config_dir=None, seed: int = 0) -> CriterionResult:
    from .mountain_pass import sup_over_path, threshold
    from .sobolev import talenti_constant

    rng = np.random.default_rng(seed)
    A = rng.uniform(1.0, 10.0, 100)
    C = rng.uniform(0.0, 5.0, 100)
    err = max(abs(sup_over_path(a, c, 0.0, 2.0, 3)[1] - a ** 1.5 / 3.0) for a, c in zip(A, C))
    thr_err = abs(threshold(3) - sup_over_path(talenti_constant(3), 0.0, 0.0, 2.0, 3)[1])
    return CriterionResult(
        7, "Mountain-pass closed form", err <= 1e-12 and thr_err <= 1e-12,
        {"max_error": err, "threshold_error": thr_err, "threshold": threshold(3)},
        f"max error {err:.1e}, threshold error {thr_err:.1e}", 1.0,
    )


def criterion_8(config_dir, seed: int = 0) -> CriterionResult:
    from .cli import eps_grid
    from .mountain_pass import dichotomy_scan, path_report

    c1 = _load(config_dir, "dichotomy_case1.toml", "bn-superlinear")
    c2 = _load(config_dir, "dichotomy_case2.toml", "bn-superlinear")
    r1 = dichotomy_scan(c1["s"], c1["n"], c1["p"], eps_grid(c1), c1["lambdas"], c1["r"])
    r2 = dichotomy_scan(c2["s"], c2["n"], c2["p"], eps_grid(c2), c2["lambdas"], c2["r"])
    case1 = r1.exponents.case == 1 and r1.witness_found
    flip = False
    if r2.exponents.case == 2 and r2.witness_found:
        lo, hi = r2.lambda0_bracket
        e = r2.witness_eps
        flip = (not path_report(e, c2["r"], c2["s"], c2["n"], c2["p"], lo).verdict) and path_report(
            e, c2["r"], c2["s"], c2["n"], c2["p"], hi
        ).verdict
    k_hat = r1.kappa_fit.exponent
    b_hat = r2.beta_fit.exponent
    ok = case1 and flip and abs(k_hat - 1.0) <= 0.15 and abs(b_hat - 1.5) <= 0.15
    return CriterionResult(
        8, "Dichotomy", ok,
        {"case1": r1.to_dict(), "case2": r2.to_dict(), "lambda0_flip": flip},
        f"case-1 witness eps {r1.witness_eps}, lambda0 {r2.lambda0}, kappa_hat {k_hat:.3f}, beta_hat {b_hat:.3f}",
        120.0,
    )


def criterion_9(config_dir=None, seed: int = 0) -> CriterionResult:
    from .domain_grid import build_grid, mask_ball
    from .forms import assemble
    from .mountain_pass import f_energy, j_energy

    forms = assemble(mask_ball(build_grid(3, 1.5, 13), None, 1.0), 0.5)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        u = rng.random(forms.size) * rng.uniform(0.1, 3.0)
        j, f = j_energy(forms, u, 1.0, 2.0), f_energy(forms, u, 1.0, 2.0)
        worst = max(worst, abs(j - f))
    u = rng.random(forms.size)
    ts = [2.0 ** -k for k in range(4, 30)]
    js = [j_energy(forms, t * u, 1.0, 2.0) for t in ts]
    monotone = all(0 < b < a for a, b in zip(js[:-1], js[1:]))
    ok = worst == 0.0 and monotone and js[-1] < 1e-12
    return CriterionResult(
        9, "Energy identities", ok,
        {"max_J_minus_F": worst, "t_sweep": ts, "J_values": js},
        f"max |J-F| {worst:.1e}, J(t u) monotone to {js[-1]:.1e}", 5.0,
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def run_criterion(fn, config_dir, seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    res = fn(config_dir, seed)
    res.runtime = time.perf_counter() - t0
    return res


def reproduce_all(config_dir, out_root, seed: int = 0) -> int:
    """Run every check, write acceptance.csv/json and print the table."""
    import hashlib

    config_dir = Path(config_dir)
    files = sorted(config_dir.glob("*.toml"))
    if not files:
        print(f"config error: no configs in {config_dir}")
        return 2
    digest = hashlib.sha256(b"".join(f.name.encode() + f.read_bytes() for f in files)).hexdigest()
    results = []
    for fn in CRITERIA:
        res = run_criterion(fn, config_dir, seed)
        print(res.line(), flush=True)
        results.append(res)
    out_dir = Path(out_root) / f"reproduce-all-seed{seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = provenance("reproduce-all", digest, seed)
    write_csv(out_dir / "acceptance.csv", ["criterion", "name", "passed", "detail"],
              [[r.number, r.name, r.passed, r.detail] for r in results], comment)
    write_json(out_dir / "acceptance.json", {"config_sha256": digest, "seed": seed, "criteria": [r.to_dict() for r in results]})
    failed = [r.number for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    print(out_dir)
    return 1 if failed else 0
