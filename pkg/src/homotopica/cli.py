"""Command-line entry point: ``homotopica <subcommand> ...``.

Subcommands:

* ``simulate``      draw a scenario and write volumes, truth and a manifest
* ``decompose``     run H-gICA or gICA on a dataset
* ``benchmark``     Monte-Carlo error tables over a noise grid
* ``homotopy``      homotopy report for an H-gICA decomposition
* ``theorem-check`` noise-free equivalence of the two pipelines

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
validation error. ``HOMOTOPICA_SEED`` overrides ``--seed`` when set.
"""

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (BlockOverflow, HomotopicaError, InvalidSpec, OddExtent,
                     PreconditionViolated)
from .evaluate import run_benchmark, theorem_check
from .fastica import CONTRASTS, FastICAOptions
from .formats import (heatmap, read_matrix_csv, read_volume, sha256_file, write_matrix_csv,
                      write_pgm, write_volume)
from .group import gica_fit
from .hgica import LEFT, RIGHT, HemispherePair, hgica_fit, report_from_time_courses, split_hemispheres
from .simgen import CASES, ScenarioSpec, make_case, write_flag_fixtures

logger = logging.getLogger("homotopica")

SEED_ENV = "HOMOTOPICA_SEED"
VALIDATION_ERRORS = (InvalidSpec, OddExtent, BlockOverflow, PreconditionViolated)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def parse_grid(text):
    """``WxH`` (width first) to the internal ``(H, W)`` tuple."""
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like WxH, got {text!r}") from None
    return h, w


def parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def resolve_seed(seed):
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


@contextlib.contextmanager
def thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        if n != 1:
            logger.warning("threadpoolctl is not installed; --threads %d ignored", n)
        yield
        return
    with threadpool_limits(limits=n):
        yield


class Stages:
    """Wall-clock timings of named stages."""

    def __init__(self):
        self.timings = {}

    @contextlib.contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def write_manifest(out, command, options, seed, inputs, outputs, stages, started):
    manifest = {
        "command": command,
        "version": __version__,
        "options": options,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out)): sha256_file(p) for p in outputs},
        "wall_clock_seconds": time.perf_counter() - started,
        "stage_seconds": stages.timings,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def engine_options(args, seed):
    return FastICAOptions(contrast=args.contrast, max_iter=args.max_iter, tol=args.tol, seed=seed)


def _image_rows(vec, half_shape, full):
    """Half (or paired full-width) map vector to a 2-D image of its slices."""
    K, B, C = half_shape
    V = K * B * C

    def half_img(v):
        return np.vstack([v.reshape(C, B, K)[c] for c in range(C)])

    if not full:
        return half_img(vec)
    return np.hstack([half_img(vec[:V]), half_img(vec[V:])[:, ::-1]])


# ---------------------------------------------------------------- datasets

def load_dataset(paths):
    """Load subjects from a ``simulate`` directory, ``.hgv`` volumes or CSVs.

    Returns ``(pairs, half_shape, input_files)``. CSV files hold ``T x 2V``
    paired-order matrices (left half, then the mirror-flipped right half).
    """
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("sub-*.hgv")) or sorted(p.glob("*.hgv"))
            if not found:
                raise UsageError(f"{p}: no .hgv volumes found")
            files.extend(found)
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"{p}: no such file or directory")
    pairs, half_shape = [], None
    for f in files:
        if f.suffix == ".hgv":
            vol = read_volume(f, subject_id=f.stem)
            A, B, C, _ = vol.dims
            shape = (A // 2, B, C)
            pair = split_hemispheres(vol, demean=False)
        elif f.suffix == ".csv":
            X = read_matrix_csv(f)
            if X.shape[1] % 2:
                raise OddExtent(f"{f}: {X.shape[1]} columns cannot split into two hemispheres")
            V = X.shape[1] // 2
            shape = (V, 1, 1)
            pair = HemispherePair(X[:, :V], X[:, V:], f.stem)
        else:
            raise UsageError(f"{f}: unsupported input (expected .hgv or .csv)")
        if half_shape is not None and shape != half_shape:
            raise UsageError(f"{f}: spatial shape {shape} differs from {half_shape}")
        half_shape = shape
        pairs.append(pair)
    return pairs, half_shape, files


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    started = time.perf_counter()
    stages = Stages()
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    spec = ScenarioSpec(case=args.case, grid=args.grid, n_subjects=args.subjects,
                        n_timepoints=args.timepoints, n_sources=args.sources,
                        noise_sd=args.noise_sd, seed=seed, block_size=args.block_size,
                        image_paths=args.images)
    if spec.case == "toy":
        spec = dataclasses.replace(spec, grid=(10, 10))
    dataclasses.replace(spec, image_paths=spec.image_paths or ["(bundled fixtures)"]).validate()
    if spec.case == "images" and not spec.image_paths:
        with stages("fixtures"):
            spec.image_paths = [str(p) for p in write_flag_fixtures(out / "fixtures")]
    spec.validate()
    out.mkdir(parents=True, exist_ok=True)
    with stages("generate"):
        truth = make_case(spec)
    outputs = []
    with stages("write"):
        for v in truth.volumes():
            p = out / f"{v.subject_id}.hgv"
            write_volume(p, v)
            outputs.append(p)
        p = out / "S_true.csv"
        write_matrix_csv(p, truth.S_true)
        outputs.append(p)
        for i, A in enumerate(truth.A_list):
            p = out / f"A_sub-{i:03d}.csv"
            write_matrix_csv(p, A)
            outputs.append(p)
        p = out / "spec.json"
        write_json(p, {**truth.spec.to_dict(), "metadata": truth.metadata})
        outputs.append(p)
    inputs = []
    for x in map(Path, spec.image_paths or []):
        (outputs if x.resolve().is_relative_to(out.resolve()) else inputs).append(x)
    options = {"spec": spec.to_dict(), "mixing": [A.tolist() for A in truth.A_list],
               "metadata": truth.metadata}
    write_manifest(out, "simulate", options, seed, inputs, outputs, stages, started)
    print(f"wrote {len(truth.X)} subjects ({spec.case}, grid {spec.grid[1]}x{spec.grid[0]}) to {out}")
    return 0


def _fit(pairs, method, q_subject, q_group, opts, group_pca):
    if method == "hgica":
        return hgica_fit(pairs, q_subject, q_group, opts, group_pca=group_pca)
    full = [np.hstack([p.left, p.right]) for p in pairs]
    return gica_fit(full, q_subject, q_group, opts, group_pca=group_pca)


def cmd_decompose(args):
    started = time.perf_counter()
    stages = Stages()
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    with stages("load"):
        pairs, half_shape, inputs = load_dataset(args.inputs)
    T = pairs[0].left.shape[0]
    q_subject = args.q_subject or T
    q_group = args.q_group or q_subject
    opts = engine_options(args, seed)
    with stages("fit"):
        d = _fit(pairs, args.method, q_subject, q_group, opts, not args.no_group_pca)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    with stages("write"):
        p = out / "S_hat.csv"
        write_matrix_csv(p, d.S_hat)
        outputs.append(p)
        p = out / "mixing.csv"
        write_matrix_csv(p, d.M_hat)
        outputs.append(p)
        time_courses = []
        for i, h in d.blocks:
            tc = d.time_courses(i, h)
            tag = {None: "", LEFT: "_left", RIGHT: "_right"}[h]
            p = out / f"A_{d.subject_ids[i]}{tag}.csv"
            write_matrix_csv(p, tc)
            outputs.append(p)
            time_courses.append({"subject": i, "hemisphere": h, "values": tc})
        for k, row in enumerate(d.S_hat):
            p = out / f"component_{k:02d}.pgm"
            write_pgm(p, heatmap(_image_rows(row, half_shape, full=d.method == "gica")))
            outputs.append(p)
        p = out / "decomposition.json"
        write_json(p, {
            "method": d.method,
            "subject_ids": d.subject_ids,
            "blocks": [list(b) for b in d.blocks],
            "half_shape": list(half_shape),
            "n_components": d.n_components,
            "options": d.options,
            "converged": d.unmixing.converged,
            "iterations": d.unmixing.iterations,
            "objective": d.unmixing.objective,
            "time_courses": time_courses,
        })
        outputs.append(p)
    options = {"method": args.method, "q_subject": q_subject, "q_group": q_group,
               "group_pca": not args.no_group_pca, "engine": json.loads(opts.to_json())}
    write_manifest(out, "decompose", options, seed, inputs, outputs, stages, started)
    status = "converged" if d.unmixing.converged else "NOT converged"
    print(f"{d.method}: {d.n_components} components, {d.unmixing.iterations} iterations "
          f"({status}); outputs in {out}")
    return 0


def cmd_benchmark(args):
    started = time.perf_counter()
    stages = Stages()
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    spec = ScenarioSpec(case=args.case, grid=args.grid, n_subjects=args.subjects,
                        n_timepoints=args.timepoints, n_sources=args.sources, seed=seed,
                        block_size=args.block_size)
    if spec.case not in ("homotopic", "lateralized", "mixed"):
        raise InvalidSpec("benchmark supports the homotopic, lateralized and mixed cases")
    spec.validate()
    truth_conv = args.gica_truth
    if truth_conv == "auto":
        truth_conv = "left" if spec.case == "lateralized" else "full"
    opts = engine_options(args, seed)
    with stages("benchmark"):
        tables, seeds = run_benchmark(spec, args.noise_grid, args.reps, options=opts,
                                      gica_truth=truth_conv, workers=args.workers)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    with stages("write"):
        p = out / "errors.csv"
        with open(p, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "noise_sd", "source", "mean", "se", "iterations", "truth"])
            for t in tables:
                for q in range(t.mean.size):
                    w.writerow([t.method, repr(t.noise_sd), q, repr(float(t.mean[q])),
                                repr(float(t.se[q])), t.iterations, t.truth])
        outputs.append(p)
        p = out / "errors.json"
        write_json(p, {"spec": spec.to_dict(), "noise_grid": args.noise_grid, "reps": args.reps,
                       "gica_truth": truth_conv, "seeds": seeds,
                       "tables": [t.to_dict() for t in tables]})
        outputs.append(p)
    options = {"spec": spec.to_dict(), "noise_grid": args.noise_grid, "reps": args.reps,
               "gica_truth": truth_conv, "engine": json.loads(opts.to_json()),
               "rep_seeds": seeds, "workers": args.workers}
    write_manifest(out, "benchmark", options, seed, [], outputs, stages, started)

    for t in tables:
        se = " ".join("  n/a " if not np.isfinite(s) else f"{s:.4f}" for s in t.se)
        print(f"{t.method:6s} sd={t.noise_sd:<5g} mean " + " ".join(f"{m:.3f}" for m in t.mean)
              + f"  se {se}")
    if any(t.se_is_wide for t in tables):
        print(f"warning: standard errors are wide or undefined with --reps {args.reps}",
              file=sys.stderr)
    return 0


def cmd_homotopy(args):
    started = time.perf_counter()
    stages = Stages()
    src = Path(args.decomposition)
    path = src / "decomposition.json" if src.is_dir() else src
    if not path.exists():
        raise UsageError(f"{path}: no decomposition found")
    with open(path, encoding="utf-8") as fh:
        dec = json.load(fh)
    if dec.get("method") != "hgica":
        raise PreconditionViolated("homotopy requires hemispheric mixing blocks")
    out = Path(args.out) if args.out else path.parent
    with stages("homotopy"):
        N = len(dec["subject_ids"])
        tcs = {(b["subject"], b["hemisphere"]): np.array(b["values"]) for b in dec["time_courses"]}
        left = [tcs[i, LEFT] for i in range(N)]
        right = [tcs[i, RIGHT] for i in range(N)]
        report = report_from_time_courses(left, right, dec["subject_ids"])
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    with stages("write"):
        rd = report.to_dict()
        p = out / "homotopy.json"
        write_json(p, rd)
        outputs.append(p)
        for comp in rd["components"]:
            p = out / f"homotopy_{comp['k']:02d}.csv"
            with open(p, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["subject", "H", "left_norm", "right_norm"])
                for e in comp["per_subject"]:
                    w.writerow([e["id"], "" if e["H"] is None else repr(e["H"]),
                                repr(e["left_norm"]), repr(e["right_norm"])])
            outputs.append(p)
    write_manifest(out, "homotopy", {"decomposition": str(path)}, dec["options"].get("seed"),
                   [path], outputs, stages, started)
    for comp in rd["components"]:
        g = "missing" if comp["group_H"] is None else f"{comp['group_H']:.6f}"
        flag = "  (near-degenerate)" if comp["near_degenerate"] else ""
        print(f"component {comp['k']}: H = {g}{flag}")
    return 0


def cmd_theorem_check(args):
    started = time.perf_counter()
    stages = Stages()
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    inputs = []
    with stages("load"):
        if args.inputs:
            pairs, _, inputs = load_dataset(args.inputs)
            pairs = [HemispherePair(p.left - p.left.mean(axis=1, keepdims=True),
                                    p.right - p.right.mean(axis=1, keepdims=True), p.subject_id)
                     for p in pairs]
            source = "files"
        else:
            spec = ScenarioSpec(case="homotopic", grid=args.grid, n_subjects=args.subjects,
                                noise_sd=args.noise_sd, seed=seed).validate()
            pairs = make_case(spec).pairs()
            source = spec.to_dict()
    q = args.q or pairs[0].left.shape[0]
    opts = engine_options(args, seed)
    with stages("check"):
        res = theorem_check(pairs, q, seed=seed, options=opts, strict=not args.advisory)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "witness.json"
    write_json(p, res.to_dict())
    write_manifest(out, "theorem-check", {"q": q, "data": source, "advisory": args.advisory,
                                          "engine": json.loads(opts.to_json())},
                   seed, inputs, [p], stages, started)
    w = res.witness
    print(f"max |S_gica - [S_h, S_h]| = {res.max_abs_gap:.3e}; W gap {w.W_gap:.3e}; "
          f"max step gap {w.max_step_gap:.3e}; iterations {w.iterations[0]}/{w.iterations[1]}")
    print("PASSED" if res.passed else "FAILED")
    return 0 if res.passed else 1


# ---------------------------------------------------------------- parser

def _engine_flags(p):
    p.add_argument("--contrast", choices=sorted(CONTRASTS), default="logcosh")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)


def _scenario_flags(p, grid=(100, 100)):
    p.add_argument("--grid", type=parse_grid, default=grid, metavar="WxH",
                   help="voxel grid, width first (width must be even)")
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--timepoints", type=int, default=3)
    p.add_argument("--sources", type=int, default=3)
    p.add_argument("--block-size", type=int, default=ScenarioSpec.block_size)


def build_parser():
    parser = argparse.ArgumentParser(prog="homotopica", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS threads (default 1 for bit-reproducible output)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--case", choices=CASES, default="homotopic")
    _scenario_flags(p)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", nargs="+", help="grayscale images for --case images")
    p.add_argument("--out", default="simulated")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decompose", help="run H-gICA or gICA")
    p.add_argument("inputs", nargs="+", help="dataset directory, .hgv volumes or .csv matrices")
    p.add_argument("--method", choices=("hgica", "gica"), default="hgica")
    p.add_argument("--q-subject", type=int)
    p.add_argument("--q-group", type=int)
    p.add_argument("--no-group-pca", action="store_true")
    _engine_flags(p)
    p.add_argument("--out", default="decomposition")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("benchmark", help="Monte-Carlo error tables")
    p.add_argument("--case", choices=("homotopic", "lateralized", "mixed"), default="homotopic")
    _scenario_flags(p)
    p.add_argument("--noise-grid", type=parse_floats, default=[0.0, 1.0, 2.0, 5.0, 10.0])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--gica-truth", choices=("auto", "full", "left"), default="auto")
    p.add_argument("--workers", type=int, default=1)
    _engine_flags(p)
    p.add_argument("--out", default="benchmark")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("homotopy", help="homotopy report of an H-gICA decomposition")
    p.add_argument("decomposition", help="decompose output directory or decomposition.json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_homotopy)

    p = sub.add_parser("theorem-check", help="noise-free H-gICA / gICA equivalence")
    p.add_argument("inputs", nargs="*", help="homotopic dataset (default: generated Case I)")
    p.add_argument("--grid", type=parse_grid, default=(100, 100), metavar="WxH")
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--q", type=int)
    p.add_argument("--advisory", action="store_true",
                   help="report the gap instead of rejecting non-homotopic data")
    _engine_flags(p)
    p.add_argument("--out", default="theorem-check")
    p.set_defaults(func=cmd_theorem_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with thread_limit(args.threads):
            return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 2
    except HomotopicaError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
