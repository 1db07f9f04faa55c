"""Command-line workflows: generate, localize, evaluate, benchmark, replay.

Exit codes: 0 success, 1 internal error, 2 usage or input error. Failures print a
JSON object ``{"error": {"type": ..., "message": ...}}`` on stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .evaluation import EvaluationError, aggregate, evaluate, report_csv, report_json
from .inference import localize, prepare
from .seeding import derive_rng, derive_seed
from .synthgen import GenerationError, SynthParams, generate, read_dataset, read_gt, sample_params, write_dataset
from .volume import Box, VolumeError, _atomic_write_bytes, read_volume, volume_box

log = logging.getLogger("ciloc")


class UsageError(Exception):
    """Bad flags, paths or input files (exit code 2)."""


INPUT_ERRORS = (UsageError, ConfigError, FileNotFoundError, VolumeError, GenerationError, EvaluationError,
                json.JSONDecodeError)


def _write_json(path: Path, obj) -> None:
    _atomic_write_bytes(path, (json.dumps(obj, indent=2) + "\n").encode())


def _triplet(text: str, name: str, count: int = 3) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--{name} expects {count} comma-separated numbers, got {text!r}") from None
    if len(vals) != count:
        raise UsageError(f"--{name} expects {count} comma-separated numbers, got {len(vals)}")
    return vals


def _manifest(command: str, args: dict, config: Config, seed: int, inputs, outputs, started: float) -> dict:
    return {
        "tool": "ciloc",
        "version": __version__,
        "command": command,
        "args": args,
        "config": config.to_dict(),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.time() - started, 3),
    }


# -- generate ------------------------------------------------------------------------


def _synth_setup(config: Config) -> tuple[SynthParams, dict | None]:
    synth = config.synth or {}
    unknown = set(synth) - {"base", "ranges"}
    if unknown:
        raise ConfigError(f"synth: unknown keys {sorted(unknown)}")
    try:
        base = SynthParams.from_dict(synth.get("base", {}))
    except (GenerationError, TypeError) as exc:
        raise ConfigError(f"synth.base: {exc}") from None
    ranges = synth.get("ranges")
    if ranges is not None and not isinstance(ranges, dict):
        raise ConfigError("synth.ranges must be an object of [min, max] pairs")
    return base, ranges


def cmd_generate(config_path, count: int, seed: int, out) -> list[Path]:
    started = time.time()
    if count < 1:
        raise UsageError(f"--count must be >= 1, got {count}")
    config = load_config(config_path)
    base, ranges = _synth_setup(config)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dirs = []
    for i in range(count):
        try:
            params = sample_params(derive_rng(seed, "generate", "params", i), ranges, base,
                                   seed=derive_seed(seed, "generate", "dataset", i))
        except GenerationError as exc:
            raise ConfigError(f"{config_path}: synth.ranges: {exc}") from None
        vol, gt = generate(params)
        d = out / f"ds{i:03d}"
        d.mkdir(exist_ok=True)
        write_dataset(vol, gt, d, params)
        _write_json(d / "manifest.json", _manifest(
            "generate", {"index": i}, config, params.seed, [config_path] if config_path else [],
            ["volume.raw", "volume.json", "gt.json", "params.json"], started))
        dirs.append(d)
        log.info("generated %s", d)
    _write_json(out / "manifest.json", _manifest(
        "generate", {"config": str(config_path) if config_path else None, "count": count, "seed": seed},
        config, seed, [config_path] if config_path else [], [d.name for d in dirs], started))
    return dirs


# -- localize ------------------------------------------------------------------------


def _resolve_voi_basal(config: Config, voi_flag, basal_flag):
    loc = config.localize or {}
    unknown = set(loc) - {"voi", "basal_mm"}
    if unknown:
        raise ConfigError(f"localize: unknown keys {sorted(unknown)}")
    try:
        file_voi = Box.from_json(loc["voi"]) if "voi" in loc else None
        file_basal = np.asarray(loc["basal_mm"], dtype=float).reshape(3) if "basal_mm" in loc else None
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"localize: {exc}") from None
    voi = Box(*np.split(np.asarray(_triplet(voi_flag, "voi", 6)), 2)) if voi_flag else file_voi
    basal = np.asarray(_triplet(basal_flag, "basal")) if basal_flag else file_basal
    if voi is None:
        raise UsageError("a VOI is required (--voi or localize.voi in the config)")
    if basal is None:
        raise UsageError("a basal contact is required (--basal or localize.basal_mm in the config)")
    if not voi.contains(basal)[0]:
        raise UsageError(f"basal contact {basal.tolist()} lies outside the VOI")
    return voi, basal


def _result_json(res, runs: int, seed: int) -> dict:
    return {
        "contacts_mm": res.positions.tolist(),
        "energy": res.energy,
        "runs": runs,
        "seed": seed,
        "diagnostics": res.diagnostics,
    }


def cmd_localize(volume, voi, basal, config_path, runs: int, seed: int, out, candidates=None) -> Path:
    started = time.time()
    if runs < 1:
        raise UsageError(f"--runs must be >= 1, got {runs}")
    config = load_config(config_path)
    box, basal_pt = _resolve_voi_basal(config, voi, basal)
    vol = read_volume(volume)
    box = box.intersect(volume_box(vol))
    problem = prepare(vol, box, basal_pt, config.model, config.inference)
    res = localize(vol, box, basal_pt, config.model, config.inference, runs, seed, problem)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if candidates:
        _write_json(Path(candidates), problem.cands.to_json())
    _write_json(out / "result.json", _result_json(res, runs, seed))
    _write_json(out / "manifest.json", _manifest(
        "localize", {"volume": str(volume), "voi": voi, "basal": basal, "config": str(config_path)
                     if config_path else None, "runs": runs, "seed": seed},
        config, seed, [volume] + ([config_path] if config_path else []), ["result.json"], started))
    return out / "result.json"


# -- evaluate ------------------------------------------------------------------------


def _pair_files(preds, gts) -> list[tuple[str, Path, Path]]:
    def keyed(paths, what):
        out = {}
        for p in map(Path, paths):
            if not p.is_file():
                raise FileNotFoundError(f"{what} file not found: {p}")
            key = p.parent.name or p.stem
            if key in out:
                raise EvaluationError(f"two {what} files share the dataset id {key!r}: {out[key]} and {p}")
            out[key] = p
        return out

    pk, gk = keyed(preds, "prediction"), keyed(gts, "ground-truth")
    orphans = sorted(set(pk) ^ set(gk))
    if orphans:
        listed = [str(pk.get(k) or gk.get(k)) for k in orphans]
        raise EvaluationError(f"unpaired files: {', '.join(listed)}")
    return [(k, pk[k], gk[k]) for k in sorted(pk)]


def write_reports(reports, out: Path) -> dict:
    summary = aggregate(reports)
    _write_json(out / "report.json", report_json(reports, summary))
    _atomic_write_bytes(out / "report.csv", report_csv(reports, summary).encode())
    return summary


def cmd_evaluate(preds, gts, out) -> dict:
    started = time.time()
    pairs = _pair_files(preds, gts)
    reports = []
    for key, pred_path, gt_path in pairs:
        pred = np.asarray(json.loads(pred_path.read_text())["contacts_mm"], dtype=float)
        reports.append(evaluate(pred, read_gt(gt_path), key))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = write_reports(reports, out)
    _write_json(out / "manifest.json", _manifest(
        "evaluate", {"pred": [str(p) for p in preds], "gt": [str(g) for g in gts]}, Config(), 0,
        list(preds) + list(gts), ["report.json", "report.csv"], started))
    return summary


# -- benchmark -----------------------------------------------------------------------


def _benchmark_one(ds_dir: Path, config: Config, voi_margin: float, runs: int, seed: int, out: Path) -> dict:
    vol, gt, params = read_dataset(ds_dir)
    model_cfg = dataclasses.replace(config.model, n_nodes=len(gt))
    if params is not None:
        # the array's contact spacing is a known device property
        model_cfg = dataclasses.replace(model_cfg, d_st1_mm=params.contact_spacing)
    voi = Box(gt.contacts.min(axis=0) - voi_margin, gt.contacts.max(axis=0) + voi_margin)
    voi = voi.intersect(volume_box(vol))
    ds_seed = derive_seed(seed, "benchmark", ds_dir.name)
    res = localize(vol, voi, gt.contacts[0], model_cfg, config.inference, runs, ds_seed)
    target = out / ds_dir.name
    target.mkdir(parents=True, exist_ok=True)
    result = _result_json(res, runs, ds_seed)
    result["voi"] = voi.to_json()
    _write_json(target / "result.json", result)
    return result


def cmd_benchmark(data, config_path, runs: int, seed: int, out, jobs: int = 1) -> dict:
    started = time.time()
    data = Path(data)
    if not data.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {data}")
    datasets = sorted(p for p in data.iterdir() if p.is_dir() and (p / "gt.json").is_file())
    if not datasets:
        raise UsageError(f"no datasets (subdirectories with gt.json) in {data}")
    config = load_config(config_path)
    bench = config.benchmark or {}
    unknown = set(bench) - {"voi_margin_mm"}
    if unknown:
        raise ConfigError(f"benchmark: unknown keys {sorted(unknown)}")
    voi_margin = float(bench.get("voi_margin_mm", 2.0))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    results, failures = {}, {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {d.name: pool.submit(_benchmark_one, d, config, voi_margin, runs, seed, out) for d in datasets}
            for name, fut in futs.items():
                try:
                    results[name] = fut.result()
                except Exception as exc:  # recorded, benchmark continues
                    failures[name] = f"{type(exc).__name__}: {exc}"
    else:
        for d in datasets:
            try:
                results[d.name] = _benchmark_one(d, config, voi_margin, runs, seed, out)
                log.info("localized %s (energy %.4f)", d.name, results[d.name]["energy"])
            except Exception as exc:  # recorded, benchmark continues
                failures[d.name] = f"{type(exc).__name__}: {exc}"
                log.warning("dataset %s failed: %s", d.name, failures[d.name])

    reports = [evaluate(np.asarray(results[d.name]["contacts_mm"]), read_gt(d / "gt.json"), d.name)
               for d in datasets if d.name in results]
    summary = write_reports(reports, out) if reports else {"count": 0}
    summary = dict(summary, failures=failures, n_failed=len(failures))
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", _manifest(
        "benchmark", {"data": str(data), "config": str(config_path) if config_path else None,
                      "runs": runs, "seed": seed}, config, seed, [data], [d.name for d in datasets], started))
    return summary


# -- replay --------------------------------------------------------------------------


def cmd_replay(manifest_path, out) -> None:
    """Re-run the command recorded in a top-level manifest, writing into ``out``."""
    man = json.loads(Path(manifest_path).read_text())
    cmd, args = man.get("command"), man.get("args", {})
    if cmd == "generate":
        cmd_generate(args.get("config"), int(args["count"]), int(args["seed"]), out)
    elif cmd == "localize":
        cmd_localize(args["volume"], args.get("voi"), args.get("basal"), args.get("config"), int(args["runs"]),
                     int(args["seed"]), out)
    elif cmd == "evaluate":
        cmd_evaluate(args["pred"], args["gt"], out)
    elif cmd == "benchmark":
        cmd_benchmark(args["data"], args.get("config"), int(args["runs"]), int(args["seed"]), out)
    else:
        raise UsageError(f"{manifest_path}: cannot replay command {cmd!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ciloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ciloc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate synthetic datasets")
    g.add_argument("--config")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    loc = sub.add_parser("localize", help="localize contacts in one volume")
    loc.add_argument("--volume", required=True)
    loc.add_argument("--voi", help="min and max corner in mm: x0,y0,z0,x1,y1,z1")
    loc.add_argument("--basal", help="basal contact in mm: x,y,z")
    loc.add_argument("--config")
    loc.add_argument("--runs", type=int, default=1)
    loc.add_argument("--seed", type=int, default=0)
    loc.add_argument("--out", required=True)
    loc.add_argument("--candidates", help="also write the extracted candidate points to this JSON file")

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("--pred", nargs="+", required=True)
    ev.add_argument("--gt", nargs="+", required=True)
    ev.add_argument("--out", required=True)

    b = sub.add_parser("benchmark", help="localize and evaluate every dataset in a directory")
    b.add_argument("--data", required=True)
    b.add_argument("--config")
    b.add_argument("--runs", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            cmd_generate(args.config, args.count, args.seed, args.out)
        elif args.command == "localize":
            cmd_localize(args.volume, args.voi, args.basal, args.config, args.runs, args.seed, args.out,
                         args.candidates)
        elif args.command == "evaluate":
            cmd_evaluate(args.pred, args.gt, args.out)
        elif args.command == "benchmark":
            summary = cmd_benchmark(args.data, args.config, args.runs, args.seed, args.out, args.jobs)
            print(json.dumps({k: summary[k] for k in ("mean", "median", "n_failed") if k in summary}))
        elif args.command == "replay":
            cmd_replay(args.manifest, args.out)
    except INPUT_ERRORS as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("internal error", exc_info=True)
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
