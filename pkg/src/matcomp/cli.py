"""Command-line interface: ``matcomp {complete,transfer,infer,simulate}``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure,
4 degenerate inference query.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, io
from .completion import CrudeSolverConfig, debiased_estimate
from .errors import DegenerateQueryError, InvalidInputError, MatcompError, NumericFailureError
from .inference import BilinearQuery, bilinear_ci
from .simulation import ExperimentSettings, GeneratorConfig, resolve_threads, run_experiment
from .subspace import SelectionConfig, extract_subspaces, select_cut_dim
from .transfer import GateConfig, nora_transfer, oracle_transfer

log = logging.getLogger("matcomp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_QUERY = 0, 2, 3, 4

# keys accepted in a transfer config file, with their defaults
TRANSFER_DEFAULTS = {
    "p": None,
    "q": None,
    "p0": None,
    "q0": None,
    "rank": 3,
    "target_rank": None,
    "J": 5,
    "tau_u": 0.5,
    "tau_v": 0.5,
    "delta_u": None,
    "delta_v": None,
    "debias_target": False,
    "max_iters": 500,
    "rel_tol": 1e-6,
}

GENERATOR_KEYS = {f.name for f in dataclasses.fields(GeneratorConfig)}
SETTINGS_KEYS = {f.name for f in dataclasses.fields(ExperimentSettings)}


def _check_keys(cfg: dict, allowed, where: str) -> None:
    if not isinstance(cfg, dict):
        raise InvalidInputError(f"{where}: expected a JSON object")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise InvalidInputError(f"{where}: unknown key(s): {', '.join(unknown)}")


def _run_quietly(fn, *args, **kwargs):
    """Call ``fn`` and return ``(result, warning messages)``."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = fn(*args, **kwargs)
    return out, [str(w.message) for w in caught]


def _crude_cfg(rank, max_iters=500, rel_tol=1e-6) -> CrudeSolverConfig:
    return CrudeSolverConfig(int(rank), max_iters=int(max_iters), rel_tol=float(rel_tol))


def cmd_complete(args) -> int:
    manifest = io.RunManifest(
        config={
            "subcommand": "complete",
            "p": args.p,
            "q": args.q,
            "rank": args.rank,
            "J": args.J,
            "seed": args.seed,
            "max_iters": args.max_iters,
            "rel_tol": args.rel_tol,
        }
    )
    obs = io.read_observations(args.obs, args.p, args.q)
    manifest.add_inputs(args.obs)
    cfg = _crude_cfg(args.rank, args.max_iters, args.rel_tol)
    est, msgs = _run_quietly(debiased_estimate, obs, cfg, args.J, np.random.SeedSequence(args.seed))
    manifest.warnings.extend(msgs)
    for m in msgs:
        log.warning("%s", m)

    out = Path(args.out)
    io.write_matrix(out, est.estimate)
    manifest_path = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    io.write_json(manifest_path, {"manifest": manifest.to_dict(), "n": est.n, "rank": est.rank, "output": str(out)})
    if args.json:
        print(json.dumps({"output": str(out), "manifest": str(manifest_path), "n": est.n}))
    elif not args.quiet:
        print(f"wrote {out} ({args.p}x{args.q}, n={est.n}, rank={args.rank}, J={args.J})")
    return EXIT_OK


def _transfer_config(args) -> dict:
    cfg = dict(TRANSFER_DEFAULTS)
    if args.config:
        loaded = io.read_json(args.config)
        _check_keys(loaded, TRANSFER_DEFAULTS, str(args.config))
        cfg.update(loaded)
    for key in TRANSFER_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["p"] is None or cfg["q"] is None:
        raise InvalidInputError("matrix dimensions p and q are required (flags or config)")
    if cfg["target_rank"] is None:
        cfg["target_rank"] = cfg["rank"]
    return cfg


def _debias_job(job):
    path, p, q, crude, J, seed, sid = job
    obs = io.read_observations(path, p, q)
    return _run_quietly(debiased_estimate, obs, crude, J, seed, sid)


def _source_ids(paths):
    ids, seen = [], set()
    for k, path in enumerate(paths):
        sid = Path(path).stem
        if sid in seen:
            sid = f"{sid}#{k}"
        seen.add(sid)
        ids.append(sid)
    return ids


def cmd_transfer(args) -> int:
    cfg = _transfer_config(args)
    p, q = int(cfg["p"]), int(cfg["q"])
    sources = list(args.source or [])
    manifest = io.RunManifest(config={"subcommand": "transfer", "mode": args.mode, "seed": args.seed, **cfg})
    target = io.read_observations(args.target, p, q)
    manifest.add_inputs(args.target, *sources)
    if args.mode == "oracle" and not sources:
        raise InvalidInputError("oracle mode needs at least one --source file")

    crude_src = _crude_cfg(cfg["rank"], cfg["max_iters"], cfg["rel_tol"])
    seeds = np.random.SeedSequence(args.seed).spawn(len(sources) + 1)
    jobs = [
        (path, p, q, crude_src, int(cfg["J"]), s, sid)
        for path, s, sid in zip(sources, seeds, _source_ids(sources))
    ]
    workers = resolve_threads(args.threads)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_debias_job, jobs))
    else:
        done = [_debias_job(j) for j in jobs]
    debiased = [d for d, _ in done]
    for _, msgs in done:
        manifest.warnings.extend(msgs)

    if sources:
        subs = [extract_subspaces(d) for d in debiased]
        # stay below the summed source rank so the trailing null gap cannot win
        total = sum(s.r for s in subs)
        for key, side, dim in (("p0", "left", p), ("q0", "right", q)):
            if cfg[key] is None:
                max_dim = min(dim - 1, 20, max(subs[0].r, total - 1))
                cfg[key] = select_cut_dim(subs, side, max_dim)
                manifest.config[key] = cfg[key]
    for key in ("p0", "q0"):
        if cfg[key] is None:
            cfg[key] = cfg["target_rank"]
            manifest.config[key] = cfg[key]

    if args.mode == "oracle":
        model, msgs = _run_quietly(oracle_transfer, target, debiased, int(cfg["p0"]), int(cfg["q0"]))
    else:
        r0 = int(cfg["target_rank"])
        gate = GateConfig(
            0.3 * r0 if cfg["delta_u"] is None else float(cfg["delta_u"]),
            0.3 * r0 if cfg["delta_v"] is None else float(cfg["delta_v"]),
            r0,
        )
        model, msgs = _run_quietly(
            nora_transfer,
            target,
            debiased,
            int(cfg["p0"]),
            int(cfg["q0"]),
            SelectionConfig(float(cfg["tau_u"])),
            SelectionConfig(float(cfg["tau_v"])),
            gate,
            _crude_cfg(r0, cfg["max_iters"], cfg["rel_tol"]),
            seeds[-1],
            bool(cfg["debias_target"]),
            int(cfg["J"]),
        )
        if not sources:
            msgs.append("no source files given; the model is fitted in the target's own crude subspaces")
        for side, used, chosen in (("U", model.gate_u_used_transfer, model.selected_u), ("V", model.gate_v_used_transfer, model.selected_v)):
            if sources and not chosen:
                msgs.append(f"source selection on {side} is empty; falling back to the target subspace")
            elif sources and not used:
                msgs.append(f"gate on {side} rejected the integrated subspace; falling back to the target subspace")
    manifest.warnings.extend(msgs)
    for m in manifest.warnings:
        log.warning("%s", m)

    doc = io.model_to_dict(model)
    doc["manifest"] = manifest.to_dict()
    io.write_json(args.out, doc)
    rel = model.relative_residual(target)
    if args.json:
        print(json.dumps({
            "relative_residual": rel,
            "p0": model.p0,
            "q0": model.q0,
            "n_selected_u": len(model.selected_u),
            "n_selected_v": len(model.selected_v),
            "gate_u_used_transfer": model.gate_u_used_transfer,
            "gate_v_used_transfer": model.gate_v_used_transfer,
        }, sort_keys=True))
    elif not args.quiet:
        print(
            f"relative_residual={rel:.6g} p0={model.p0} q0={model.q0} "
            f"|I_U|={len(model.selected_u)} |I_V|={len(model.selected_v)}"
        )
    return EXIT_OK


def _query_vector(spec: str, dim: int, name: str) -> np.ndarray:
    if spec.startswith("e:"):
        try:
            idx = int(spec[2:])
        except ValueError:
            raise InvalidInputError(f"{name}: bad basis spec {spec!r}") from None
        if not 0 <= idx < dim:
            raise InvalidInputError(f"{name}: index {idx} outside [0, {dim})")
        vec = np.zeros(dim)
        vec[idx] = 1.0
        return vec
    vec = io.read_vector(spec)
    if vec.size != dim:
        raise InvalidInputError(f"{name}: vector file has {vec.size} entries, expected {dim}")
    return vec


def cmd_infer(args) -> int:
    model = io.model_from_dict(io.read_json(args.model))
    obs = io.read_observations(args.obs, model.p, model.q)
    query = BilinearQuery(
        _query_vector(args.u, model.p, "u"), _query_vector(args.v, model.q, "v"), args.level
    )
    if model.mode != "oracle":
        log.info("inference on a gated model is experimental")
    res = bilinear_ci(model, obs, query)
    manifest = io.RunManifest(
        config={"subcommand": "infer", "u": args.u, "v": args.v, "level": args.level, "seed": args.seed}
    )
    manifest.add_inputs(args.model, args.obs, *[s for s in (args.u, args.v) if not s.startswith("e:")])
    out = {
        "point": res.point,
        "sigma_l": res.sigma_l,
        "z": res.z,
        "half_width": res.half_width,
        "ci_lo": res.ci_lo,
        "ci_hi": res.ci_hi,
        "level": args.level,
        "n0": res.n0,
        "manifest": manifest.to_dict(),
    }
    if args.json:
        print(io.dumps(out), end="")
    elif not args.quiet:
        print(
            f"point={res.point:.10g} sigma_l={res.sigma_l:.10g} z={res.z:.10g} "
            f"half_width={res.half_width:.10g} ci=[{res.ci_lo:.10g}, {res.ci_hi:.10g}]"
        )
    return EXIT_OK


def load_simulation_config(path) -> tuple[GeneratorConfig, ExperimentSettings, int | None]:
    raw = io.read_json(path)
    _check_keys(raw, GENERATOR_KEYS | SETTINGS_KEYS, str(path))
    gen = {k: v for k, v in raw.items() if k in GENERATOR_KEYS and k != "seed"}
    sett = {k: v for k, v in raw.items() if k in SETTINGS_KEYS}
    try:
        if "source_mix" in gen:
            gen["source_mix"] = tuple(gen["source_mix"])
        if "methods" in sett:
            sett["methods"] = tuple(sett["methods"])
        return GeneratorConfig(**gen), ExperimentSettings(**sett), raw.get("seed")
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def cmd_simulate(args) -> int:
    gen, settings, cfg_seed = load_simulation_config(args.config)
    seed = args.seed if args.seed_given else (cfg_seed if cfg_seed is not None else args.seed)
    manifest = io.RunManifest(
        config={"subcommand": "simulate", "generator": gen.to_dict(), "settings": settings.to_dict(), "seed": seed}
    )
    manifest.config["generator"]["seed"] = None
    manifest.add_inputs(args.config)
    res, msgs = _run_quietly(
        run_experiment, gen, settings.methods, settings.reps, seed, settings, args.threads
    )
    manifest.warnings.extend(sorted(set(msgs)))
    doc = io.result_to_dict(res)
    doc["manifest"] = manifest.to_dict()
    out = Path(args.out)
    io.write_json(out, doc)
    io.write_result_csv(out.with_suffix(".csv"), res)
    if args.json:
        print(json.dumps({m.label: {"mean": m.mean, "stderr": m.stderr, "n_failed": m.n_failed} for m in res.methods}, sort_keys=True))
    elif not args.quiet:
        for m in res.methods:
            print(f"{m.label:16s} mean={m.mean:.6g} stderr={m.stderr:.3g} failed={m.n_failed}")
    return EXIT_OK


class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, action=_SeedAction, help="root seed for all randomness (default 0)")
    common.add_argument("--threads", type=int, default=None, help="worker processes (default: $MATCOMP_THREADS or 1)")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--quiet", action="store_true", help="suppress non-error output")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = argparse.ArgumentParser(prog="matcomp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", parents=[common], help="debiased completion of one observation file")
    p.add_argument("--obs", required=True, help="observation CSV (header a,b,y)")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--J", type=int, default=5, help="number of folds (default 5)")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=500)
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="matrix CSV to write")
    p.add_argument("--manifest", help="manifest JSON path (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_complete)

    t = sub.add_parser("transfer", parents=[common], help="fit a target model using source files")
    t.add_argument("--target", required=True, help="target observation CSV")
    t.add_argument("--source", action="append", help="source observation CSV (repeatable)")
    t.add_argument("--mode", choices=("oracle", "nora"), default="nora")
    t.add_argument("--config", help="JSON with any of: " + ", ".join(TRANSFER_DEFAULTS))
    for key, typ in (("p", int), ("q", int), ("p0", int), ("q0", int), ("rank", int), ("target_rank", int), ("J", int),
                     ("tau_u", float), ("tau_v", float), ("delta_u", float), ("delta_v", float)):
        t.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
    t.add_argument("--debias-target", dest="debias_target", action="store_true", default=None)
    t.add_argument("--out", required=True, help="model JSON to write")
    t.set_defaults(func=cmd_transfer)

    i = sub.add_parser("infer", parents=[common], help="confidence interval for u^T Theta v")
    i.add_argument("--model", required=True, help="model JSON from 'transfer'")
    i.add_argument("--obs", required=True, help="target observation CSV")
    i.add_argument("--u", required=True, help="'e:<index>' or vector CSV path")
    i.add_argument("--v", required=True, help="'e:<index>' or vector CSV path")
    i.add_argument("--level", type=float, default=0.95)
    i.set_defaults(func=cmd_infer)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo comparison of methods")
    s.add_argument("--config", required=True, help="JSON of generator and experiment keys")
    s.add_argument("--out", required=True, help="result JSON (a .csv is written alongside)")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "seed_given"):
        args.seed_given = False
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="matcomp: %(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except DegenerateQueryError as exc:
        log.error("%s", exc)
        return EXIT_QUERY
    except (NumericFailureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (InvalidInputError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except MatcompError as exc:
        log.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
