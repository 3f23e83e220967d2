"""Command-line interface: ``gnull {simulate,estimate,paradox,generate}``.

Exit codes: 0 success, 1 usage/config/data error, 2 runtime or statistical
failure. Results go to standard output as JSON; tables go to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bootstrap_gformula
from .datagen import DgpConfig, TreatmentKind, generate_dataset, read_csv, write_csv
from .errors import ConfigError, DataSchemaError, DesignError, EnumerationInfeasibleError, GNullError
from .features import Level, ModelSpec, builtin_spec
from .gformula import Intervention
from .paradox import (PgfParams, check_a1_only_msm, check_sharp_null, corner_values,
                      msm_closed_form)
from .study import (SCALES, STANDARD_K, CellResult, ScenarioConfig, default_workers,
                    emit_report, run_cell, summarize)

log = logging.getLogger("gnull")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

SIMULATE_KEYS = {
    "scale", "treatment_kinds", "K", "flexibilities", "master_seed", "n", "n_replicates",
    "bootstrap_B", "ci_level", "ci_method", "n_simul", "allow_custom_K", "custom_spec",
}
GENERATE_KEYS = {f.name for f in dataclasses.fields(DgpConfig)} | {"replicate"}


class UsageError(Exception):
    pass


def load_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: top level must be a JSON object")
    return obj


def _reject_unknown(cfg: dict, allowed: set, path) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise UsageError(f"{path}: unknown field(s) {', '.join(unknown)}")


def _field(cfg: dict, key: str, typ, default, path):
    value = cfg.get(key, default)
    if value is None:
        return default
    ok = isinstance(value, typ) and not (typ in (int, (int, float)) and isinstance(value, bool))
    if not ok:
        raise UsageError(f"{path}: field '{key}' has the wrong type ({type(value).__name__})")
    return value


def scenarios_from_config(cfg: dict, path="config", scale: str | None = None,
                          seed: int | None = None) -> list[ScenarioConfig]:
    """Expand a simulate config into one ScenarioConfig per (kind, K)."""
    _reject_unknown(cfg, SIMULATE_KEYS, path)
    scale = scale or _field(cfg, "scale", str, "desk", path)
    if scale not in SCALES:
        raise UsageError(f"{path}: field 'scale' must be one of {sorted(SCALES)}")
    kinds = _field(cfg, "treatment_kinds", list, ["continuous", "binary"], path)
    Ks = _field(cfg, "K", list, list(STANDARD_K), path)
    flex = _field(cfg, "flexibilities", list, [lv.value for lv in Level if lv is not Level.CUSTOM], path)
    allow_custom_K = _field(cfg, "allow_custom_K", bool, False, path)
    custom = cfg.get("custom_spec")
    try:
        custom_spec = None if custom is None else ModelSpec.from_dict({**custom, "label": "custom"})
    except ConfigError as exc:
        raise UsageError(f"{path}: field 'custom_spec': {exc}") from None
    overrides = {}
    for key in ("n", "n_replicates", "bootstrap_B", "n_simul"):
        v = _field(cfg, key, int, None, path)
        if v is not None:
            overrides[key] = v
    master_seed = seed if seed is not None else _field(cfg, "master_seed", int, 0, path)
    scenarios = []
    for kind in kinds:
        for K in Ks:
            if not isinstance(K, int) or isinstance(K, bool):
                raise UsageError(f"{path}: field 'K' must list integers")
            try:
                scenarios.append(ScenarioConfig.at_scale(
                    kind, K, scale,
                    ci_level=_field(cfg, "ci_level", (int, float), 0.95, path),
                    ci_method=_field(cfg, "ci_method", str, "percentile", path),
                    flexibilities=tuple(flex), master_seed=master_seed,
                    custom_spec=custom_spec, allow_custom_K=allow_custom_K, **overrides))
            except (ConfigError, ValueError) as exc:
                raise UsageError(f"{path}: {exc}") from None
    if not scenarios:
        raise UsageError(f"{path}: no scenarios selected")
    return scenarios


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_simulate(args) -> int:
    cfg = load_json(args.config)
    scenarios = scenarios_from_config(cfg, args.config, scale=args.scale, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = args.threads or default_workers()
    started = _now()
    cells: list[CellResult] = []
    status = []
    executor = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for sc in scenarios:
            for flex in sc.flexibilities:
                log.info("running %s/%s", sc.scenario_id, flex.value)
                entry = {"scenario": sc.scenario_id, "flexibility": flex.value}
                try:
                    cell = run_cell(sc, flex, executor=executor)
                except GNullError as exc:
                    log.error("%s", exc)
                    entry.update(status="failed", error=str(exc))
                else:
                    cells.append(cell)
                    entry.update(status="ok", n_failed=cell.n_failed)
                status.append(entry)
    finally:
        if executor is not None:
            executor.shutdown()

    if cells:
        emit_report(cells, out, rows=[r for c in cells for r in summarize(c)])
    manifest = {
        "config_hash": config_hash({**cfg, "scale": scenarios[0].scale,
                                    "master_seed": scenarios[0].master_seed}),
        "tool_version": __version__,
        "master_seed": scenarios[0].master_seed,
        "scale": scenarios[0].scale,
        "started": started,
        "finished": _now(),
        "cells": status,
    }
    _write_atomic(out / "run_manifest.json", json.dumps(manifest, indent=2) + "\n")
    failed = [s for s in status if s["status"] != "ok"]
    print(json.dumps({"out": str(out), "cells": len(status), "failed": len(failed)}))
    return EXIT_RUNTIME if failed else EXIT_OK


def _load_spec(text: str, K: int) -> ModelSpec:
    if text in {lv.value for lv in Level if lv is not Level.CUSTOM}:
        return builtin_spec(text, K)
    cfg = load_json(text)
    if set(cfg) <= {"level"} and "level" in cfg:
        return builtin_spec(cfg["level"], K)
    try:
        return ModelSpec.from_dict(cfg)
    except ConfigError as exc:
        raise UsageError(f"{text}: {exc}") from None


def cmd_estimate(args) -> int:
    try:
        data = read_csv(args.data)
    except OSError as exc:
        raise UsageError(f"cannot read {args.data}: {exc.strerror}") from None
    K = args.K or data.K
    spec = _load_spec(args.spec, K)
    if args.mode == "enumerate" and not np.all((data.l == 0) | (data.l == 1)):
        raise UsageError("enumeration requires binary covariates")
    if args.interventions:
        lo, hi = args.interventions
    elif data.treatment_kind is TreatmentKind.BINARY:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 50.0, 150.0
    ivs = (Intervention.static(lo, K), Intervention.static(hi, K))
    try:
        boot = bootstrap_gformula(data, spec, ivs, B=args.B, level=args.level, seed=args.seed,
                                  K=K, n_simul=args.n_simul, mode=args.mode,
                                  ci_method=args.ci_method, workers=args.threads or 1)
    except (DesignError, DataSchemaError, EnumerationInfeasibleError) as exc:
        raise UsageError(str(exc)) from None
    out = {
        "spec": spec.label.value,
        "K": K,
        "n": data.n,
        "interventions": [iv.label for iv in ivs],
        "means": boot.point.means,
        "difference": boot.point.difference,
        "ci": {t: dataclasses.asdict(ci) for t, ci in boot.cis.items()},
        "bootstrap_failures": boot.n_failed,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_paradox(args) -> int:
    try:
        p = PgfParams(tuple(args.theta), tuple(args.beta))
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    check = check_sharp_null if args.check == "sharp-null" else check_a1_only_msm
    res = check(p, tol=args.tol)
    out = {
        "theta": list(p.theta),
        "beta": list(p.beta),
        "h": {f"{a0},{a1}": v for (a0, a1), v in corner_values(p).items()},
        "psi": list(msm_closed_form(p).psi),
        "check": args.check,
        "compatible": res.compatible,
        "condition": res.condition.value,
        "residual": res.residual,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_json(args.config)
    _reject_unknown(cfg, GENERATE_KEYS, args.config)
    cfg = dict(cfg)
    replicate = cfg.pop("replicate", 0)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    kind = cfg.pop("treatment_kind", "continuous")
    try:
        dgp = DgpConfig.for_kind(kind, **cfg)
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(f"{args.config}: {exc}") from None
    ds = generate_dataset(dgp, replicate)
    write_csv(ds, args.out, include_u=args.with_u)
    print(json.dumps({
        "out": str(args.out),
        "n": ds.n,
        "K": ds.K,
        "treatment_kind": dgp.treatment_kind.value,
        "p_L0": float(np.mean(ds.l_at(0))),
        "mean_Y": float(np.mean(ds.y)),
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnull", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gnull {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the simulation study")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=os.environ.get("GNULL_OUT", "out"))
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--scale", choices=sorted(SCALES))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="g-formula estimate with bootstrap CIs for one dataset")
    p.add_argument("--data", required=True, help="long-format CSV (id,time,L,A,Y[,U])")
    p.add_argument("--spec", required=True,
                   help="least|moderate|most|benchmark or a JSON spec file")
    p.add_argument("--K", type=int)
    p.add_argument("--interventions", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--B", type=int, default=250)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["mc", "enumerate"], default="mc")
    p.add_argument("--n-simul", type=int)
    p.add_argument("--ci-method", choices=["percentile", "normal"], default="percentile")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("paradox", help="closed-form g-null analytics")
    p.add_argument("--theta", type=float, nargs=4, required=True, metavar="T")
    p.add_argument("--beta", type=float, nargs=2, required=True, metavar="B")
    p.add_argument("--check", choices=["sharp-null", "a1-only"], default="sharp-null")
    # Inputs typed on a command line carry ~7 significant digits.
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_paradox)

    p = sub.add_parser("generate", help="write one simulated dataset as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--with-u", action="store_true", help="add the unmeasured U column")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, DataSchemaError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GNullError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
