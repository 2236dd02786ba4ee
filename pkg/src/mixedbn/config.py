"""Experiment configs: TOML (or JSON) with one top-level table per subcommand.

Every key is checked against a schema before any computation starts; unknown
keys, wrong types and out-of-range values raise ConfigError.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


_REQUIRED = object()


def _num(lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{key}: expected a finite number, got {v!r}")
        if v < lo or v > hi or (lo_open and v == lo) or (hi_open and v == hi):
            raise ConfigError(f"{key}: {v} outside the allowed range")
        return float(v)
    return check


def _int(lo=None, hi=None, odd=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigError(f"{key}: {v} outside the allowed range")
        if odd and v % 2 == 0:
            raise ConfigError(f"{key}: must be odd so the grid has a centre node, got {v}")
        return v
    return check


def _list(item: Callable, min_len=1):
    def check(key, v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ConfigError(f"{key}: expected a list with at least {min_len} entries")
        return [item(f"{key}[{i}]", x) for i, x in enumerate(v)]
    return check


def _choice(*options):
    def check(key, v):
        if v not in options:
            raise ConfigError(f"{key}: {v!r} not one of {options}")
        return v
    return check


def _str(key, v):
    if not isinstance(v, str):
        raise ConfigError(f"{key}: expected a string")
    return v


def _bool(key, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: expected true or false")
    return v


def _domain(key, v):
    if not isinstance(v, dict):
        raise ConfigError(f"{key}: expected a table")
    kind = v.get("kind")
    if kind == "ball":
        return _table(key, v, {"kind": (_str, _REQUIRED), "radius": (_num(0, lo_open=True), _REQUIRED), "center": (_list(_num()), None)})
    if kind == "box":
        return _table(
            key, v, {"kind": (_str, _REQUIRED), "half_widths": (_list(_num(0, lo_open=True)), _REQUIRED), "center": (_list(_num()), None)}
        )
    raise ConfigError(f"{key}.kind: expected 'ball' or 'box', got {kind!r}")


def _table(name: str, raw: dict, schema: dict) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")
    out = {}
    for key, (check, default) in schema.items():
        if key in raw:
            out[key] = check(f"{name}.{key}", raw[key])
        elif default is _REQUIRED:
            raise ConfigError(f"{name}: missing required key {key!r}")
        else:
            out[key] = default
    return out


_GRID = {
    "n": (_int(3, 6), 3),
    "L": (_num(0, lo_open=True), _REQUIRED),
    "m": (_int(3, 201, odd=True), _REQUIRED),
    "domain": (_domain, _REQUIRED),
    "s": (_num(0, 1, True, True), _REQUIRED),
    "self_cell": (_bool, True),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "eigen": {
        **_GRID,
        "which": (_list(_choice("fractional", "local", "mixed")), ["fractional", "local", "mixed"]),
        "tol": (_num(0, 1, lo_open=True), 1e-10),
        "res_tol": (_num(0, 1, lo_open=True), 1e-8),
        "max_iter": (_int(1), 500),
    },
    "sobolev-scan": {
        "mode": (_choice("spread_t", "shrink_k", "discrete"), _REQUIRED),
        "n": (_int(3, 6), 3),
        "s": (_num(0, 1, True, True), _REQUIRED),
        "values": (_list(_num(0, lo_open=True)), None),
        "bump_radius": (_num(0, lo_open=True), 1.0),
        "L": (_num(0, lo_open=True), None),
        "m": (_list(_int(3, 201, odd=True)), None),
        "domain": (_domain, None),
        "self_cell": (_bool, True),
        "max_iter": (_int(1), 4000),
        "gtol": (_num(0, 1, lo_open=True), 1e-9),
    },
    "bn-linear": {
        **_GRID,
        "lambdas": (_list(_num(0, lo_open=True), 5), None),
        "plateau_samples": (_int(2), 6),
        "window_samples": (_int(2), 8),
        "super_fractions": (_list(_num(1.0, lo_open=True)), [1.05, 1.1]),
        "plateau_tol": (_num(0, lo_open=True), None),
        "warm_start": (_bool, True),
        "max_iter": (_int(1), 3000),
        "extract_at": (_int(0), None),
    },
    "bn-superlinear": {
        "n": (_int(3, 6), 3),
        "s": (_num(0, 1, True, True), _REQUIRED),
        "p": (_num(1, lo_open=True), _REQUIRED),
        "r": (_num(0, lo_open=True), 0.5),
        "eps": (_list(_num(0, lo_open=True), 4), None),
        "eps_kmin": (_int(0), 3),
        "eps_kmax": (_int(1), 33),
        "eps_step": (_int(1), 2),
        "lambdas": (_list(_num(0, lo_open=True)), [0.01, 0.1, 1.0, 10.0]),
        "solve": (_bool, False),
        "solve_lambda": (_num(0), None),
        "L": (_num(0, lo_open=True), None),
        "m": (_int(3, 201, odd=True), None),
        "domain": (_domain, None),
        "tol": (_num(0, 1, lo_open=True), 1e-6),
        "max_iter": (_int(1), 3000),
    },
    "competitor-scan": {
        "n": (_int(3, 6), 3),
        "s": (_num(0, 1, True, True), _REQUIRED),
        "p": (_list(_num(1, lo_open=True)), [2.0]),
        "r": (_num(0, lo_open=True), 0.5),
        "eps": (_list(_num(0, lo_open=True), 4), None),
        "eps_kmin": (_int(0), 3),
        "eps_kmax": (_int(1), 33),
        "eps_step": (_int(1), 2),
    },
}


def validate(subcommand: str, raw: dict) -> dict:
    """Check a parsed document and return the block with defaults filled in."""
    if subcommand not in SCHEMAS:
        raise ConfigError(f"no schema for subcommand {subcommand!r}")
    if set(raw) != {subcommand}:
        raise ConfigError(f"config must hold exactly one top-level table [{subcommand}], found {sorted(raw)}")
    block = raw[subcommand]
    if not isinstance(block, dict):
        raise ConfigError(f"[{subcommand}] must be a table")
    cfg = _table(subcommand, block, SCHEMAS[subcommand])
    _cross_checks(subcommand, cfg)
    return cfg


def _cross_checks(sub: str, cfg: dict) -> None:
    if "domain" in cfg and cfg["domain"] is not None and "n" in cfg:
        d = cfg["domain"]
        for key in ("center", "half_widths"):
            if d.get(key) is not None and len(d[key]) != cfg["n"]:
                raise ConfigError(f"{sub}.domain.{key}: needs {cfg['n']} entries")
    if sub == "sobolev-scan":
        if cfg["mode"] == "discrete":
            missing = [k for k in ("L", "m", "domain") if cfg[k] is None]
            if missing:
                raise ConfigError(f"sobolev-scan: discrete mode needs {missing}")
        elif cfg["values"] is None or len(cfg["values"]) < 4:
            raise ConfigError("sobolev-scan: 'values' needs at least 4 entries")
    if sub in ("bn-superlinear", "competitor-scan"):
        ps = cfg["p"] if isinstance(cfg["p"], list) else [cfg["p"]]
        n = cfg["n"]
        for p in ps:
            if not p < (n + 2.0) / (n - 2.0):
                raise ConfigError(f"{sub}.p: {p} is not below 2*-1 = {(n + 2.0) / (n - 2.0):g}")
        if cfg["eps"] is None and cfg["eps_kmax"] <= cfg["eps_kmin"]:
            raise ConfigError(f"{sub}: eps_kmax must exceed eps_kmin")
    if sub == "bn-superlinear" and cfg["solve"]:
        missing = [k for k in ("L", "m", "domain", "solve_lambda") if cfg[k] is None]
        if missing:
            raise ConfigError(f"bn-superlinear: solve = true needs {missing}")
    if sub == "bn-linear" and cfg["lambdas"] is not None:
        lam = cfg["lambdas"]
        if any(b <= a for a, b in zip(lam[:-1], lam[1:])):
            raise ConfigError("bn-linear.lambdas must be strictly ascending")


def read_document(path: str | Path) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(data.decode("utf-8"))
        else:
            doc = tomllib.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return doc, data


def load(subcommand: str, path: str | Path) -> tuple[dict, str]:
    """Validated config block and the sha256 of the canonical document."""
    doc, _ = read_document(path)
    cfg = validate(subcommand, doc)
    return cfg, config_hash(subcommand, cfg)


def config_hash(subcommand: str, cfg: dict[str, Any]) -> str:
    canon = json.dumps({subcommand: cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
