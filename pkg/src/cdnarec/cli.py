"""Command-line entry point.

Exit status: 0 on success, 1 on domain errors (and on rejection for
``match``), 2 on usage or parse errors.  Failures print one line
``error:<code>:<message>`` to standard error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .errors import CdnaError, ParseError
from .gabor import enhance
from .gridding import GridGeometry, compute_grid
from .mann import MannNetwork, TrainingTrace, accumulate_gradients, accumulated, init_network, numeric_gradient
from .raster import load_raster, save_pgm
from .recognition import enroll, evaluate, load_gallery, match, read_manifest
from .segmentation import segment
from .synth import SynthSpec, dice, generate, grid_error

PANEL_ORDER = ("A_enhanced", "B_adjusted", "C_log", "D_global", "E_local", "F_combined")


class UsageError(Exception):
    code = "usage"


class PathError(UsageError):
    code = "path"


class DomainFailure(Exception):
    """A non-exception domain outcome that should exit 1 (e.g. --strict)."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise PathError(f"no such file: {p}")
    return p


def _read_raster(path):
    return load_raster(_existing(path))


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str) -> None:
    path.write_text(text if text.endswith("\n") else text + "\n", newline="\n")


def _config(args) -> pipeline.PipelineConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(_existing(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
    try:
        cfg = pipeline.PipelineConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    # flags override file values
    g = cfg.gabor
    for flag, attr in (("k", "k"), ("sigma", "sigma"), ("half_width", "half_width"), ("border", "border")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(g, attr, value)
    if getattr(args, "phi", None):
        g.orientations = list(args.phi)
    if getattr(args, "grid_source", None):
        cfg.grid_source = args.grid_source
    if getattr(args, "combine", None):
        cfg.segmentation.combine = args.combine
    if getattr(args, "beta", None) is not None:
        cfg.segmentation.beta = args.beta
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
        cfg.seed = args.seed
    try:
        pipeline.PipelineConfig(**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__})
        cfg.gabor.params()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _synth_spec(path) -> SynthSpec:
    if path is None:
        return SynthSpec()
    try:
        return SynthSpec.from_dict(json.loads(_existing(path).read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"bad synth spec: {exc}") from None


def _write_synth(out: Path, spec: SynthSpec):
    image, truth = generate(spec)
    save_pgm(image, out / "image.pgm")
    save_pgm(truth.mask.to_raster(), out / "truth_mask.pgm")
    _write(out / "truth_grid.json", truth.grid.to_json())
    _write(out / "spec.json", spec.to_json())
    return image, truth


def cmd_gen(args):
    out = _outdir(args.out_dir)
    _write_synth(out, _synth_spec(args.spec))
    return 0


def cmd_enhance(args):
    cfg = _config(args)
    image = _read_raster(args.input)
    save_pgm(enhance(image, cfg.gabor.params(), cfg.gabor.border), Path(args.output))
    return 0


def cmd_grid(args):
    cfg = _config(args)
    image = _read_raster(args.input)
    src = image if cfg.grid_source == "raw" else enhance(image, cfg.gabor.params(), cfg.gabor.border)
    _write(Path(args.output), compute_grid(src, cfg.gridding).to_json())
    return 0


def _write_segmentation(out: Path, seg, stem: str = "panel"):
    for name in PANEL_ORDER:
        if name in seg.panels:
            save_pgm(seg.panels[name], out / f"{stem}_{name}.pgm")
    save_pgm(seg.mask.to_raster(), out / "mask.pgm")
    _write(out / "stats.json", seg.stats_json())


def cmd_segment(args):
    cfg = _config(args)
    image = _read_raster(args.input)
    try:
        grid = GridGeometry.from_json(_existing(args.grid).read_text())
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad grid document: {exc}") from None
    out = _outdir(args.out_dir)
    seg = segment(image, grid, cfg.segmentation)
    seg.panels["A_enhanced"] = enhance(image, cfg.gabor.params(), cfg.gabor.border)
    _write_segmentation(out, seg)
    return 0


def cmd_pipeline(args):
    cfg = _config(args)
    out = _outdir(args.out_dir)
    truth = None
    if args.synth is not None or args.input is None:
        image, truth = _write_synth(out, _synth_spec(args.synth))
    else:
        image = _read_raster(args.input)
    result = pipeline.run(image, cfg)
    save_pgm(result.enhanced, out / "enhanced.pgm")
    _write(out / "grid.json", result.grid.to_json())
    _write_segmentation(out, result.segmentation)
    save_pgm(result.matrix, out / "input20.pgm")
    _write(out / "config.json", cfg.to_json())
    if truth is not None:
        metrics = {"version": 1, "dice": dice(result.segmentation.mask, truth.mask)}
        try:
            mean_err, max_err = grid_error(truth.grid, result.grid)
            metrics.update(grid_mean_abs=mean_err, grid_max_abs=max_err, grid_count_match=True)
        except CdnaError:
            metrics.update(grid_count_match=False)
        _write(out / "metrics.json", json.dumps(metrics, indent=2))
    return 0


def cmd_enroll(args):
    cfg = _config(args)
    manifest = _existing(args.manifest)
    try:
        entries = read_manifest(manifest)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad manifest: {exc}") from None
    images, paths = [], []
    for e in entries:
        if "resolved" not in e:
            raise UsageError(f"entry {e.get('id')!r} has no image_path")
        images.append((str(e["id"]), _read_raster(e["resolved"])))
        paths.append(e["image_path"])
    out = _outdir(args.out_dir)
    try:
        net, gallery, trace = enroll(images, cfg.network, cfg.train, paths)
    except CdnaError as exc:
        if getattr(exc, "trace", None) is not None:
            _write(out / "trace.json", exc.trace.to_json())
        raise
    _write(out / "model.json", net.to_json())
    _write(out / "trace.json", trace.to_json())
    _write(out / "gallery.json", _gallery_json(gallery, manifest, out))
    print(f"epochs={len(trace)} converged={str(trace.converged).lower()} "
          f"final_sse={trace.records[-1].sse:.6g}")
    if args.strict and not trace.converged:
        raise DomainFailure("not-converged", f"training stopped after {len(trace)} epochs")
    return 0


def _gallery_json(gallery, manifest: Path, out: Path) -> str:
    """Enrolled manifest, image paths rewritten relative to ``out``."""
    src_dir = Path(manifest).resolve().parent
    entries = []
    for e in gallery.entries:
        path = None
        if e.image_path is not None:
            absolute = (src_dir / e.image_path).resolve()
            path = _relpath(absolute, out.resolve())
        entries.append({"id": e.id, "image_path": path, "target": e.target})
    return json.dumps({"version": 1, "entries": entries}, indent=2)


def _relpath(target: Path, start: Path) -> str:
    return Path(os.path.relpath(target, start)).as_posix()


def _load_model(path) -> MannNetwork:
    try:
        return MannNetwork.from_json(_existing(path).read_text())
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad model: {exc}") from None


def _load_gallery(path, net):
    from .recognition import NetConfig
    try:
        return load_gallery(_existing(path), NetConfig(net.in_h, net.in_w, net.n))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad gallery: {exc}") from None


def cmd_match(args):
    net = _load_model(args.model)
    gallery = _load_gallery(args.gallery, net)
    decision = match(net, gallery, _read_raster(args.probe), args.tau)
    print(json.dumps(decision.to_dict()))
    return 0 if decision.accepted else 1


def cmd_eval(args):
    net = _load_model(args.model)
    gallery = _load_gallery(args.gallery, net)
    probes_path = _existing(args.probes)
    try:
        doc = json.loads(probes_path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad probes manifest: {exc}") from None
    base = probes_path.parent
    genuine = [(str(p["id"]), _read_raster(base / p["image_path"])) for p in doc.get("genuine", [])]
    impostor = [_read_raster(base / p["image_path"]) for p in doc.get("impostor", [])]
    report = evaluate(net, gallery, genuine, impostor, args.tau)
    print(report.table())
    if args.report:
        _write(Path(args.report), report.to_json())
    return 0


def cmd_gradcheck(args):
    try:
        in_h, in_w, n = (int(v) for v in args.dims.lower().split("x"))
    except ValueError:
        raise UsageError(f"--dims must look like 4x4x3, got {args.dims!r}") from None
    worst = worst_abs = 0.0
    for trial in range(args.trials):
        seed = args.seed + trial
        rng = np.random.default_rng(seed)
        net = init_network(in_h, in_w, n, seed=seed, init_scale=1.0)
        I = rng.uniform(size=(in_h, in_w))
        target = float(rng.uniform(-1.0, 1.0))
        accumulate_gradients(net, I, target)
        analytic = accumulated(net).flat()
        numeric = numeric_gradient(net, I, target, args.eps).flat()
        worst = max(worst, max_relative_error(analytic, numeric))
        worst_abs = max(worst_abs, float(np.abs(analytic - numeric).max()))
    print(f"max_relative_error={worst:.3e} max_abs_error={worst_abs:.3e}")
    return 0 if worst < 1e-6 else 1


def max_relative_error(analytic, numeric, floor: float = 1e-9) -> float:
    """Largest relative mismatch, ignoring components within ``floor`` absolutely."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(diff <= floor, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return float(rel.max()) if rel.size else 0.0


def cmd_curves(args):
    try:
        trace = TrainingTrace.from_json(_existing(args.trace).read_text())
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"bad trace: {exc}") from None
    csv = trace.to_csv()
    if args.output:
        Path(args.output).write_text(csv, newline="\n")
    else:
        sys.stdout.write(csv)
    return 0


def _add_gabor_flags(p):
    p.add_argument("--k", type=float, help="carrier frequency, rad/pixel")
    p.add_argument("--sigma", type=float, help="envelope width in carrier units")
    p.add_argument("--phi", type=float, action="append", help="orientation (radians); repeatable")
    p.add_argument("--half-width", dest="half_width", type=int)
    p.add_argument("--border", choices=("replicate", "reflect", "zero"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdnarec", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config with one section per stage")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic scene and its ground truth")
    p.add_argument("out_dir")
    p.add_argument("--spec", help="synth spec JSON (defaults otherwise)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("enhance", help="Gabor-enhance an image")
    p.add_argument("input")
    p.add_argument("output")
    _add_gabor_flags(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("grid", help="detect the spot grid")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--grid-source", choices=pipeline.SOURCES)
    _add_gabor_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("segment", help="segment spots on a known grid")
    p.add_argument("input")
    p.add_argument("grid")
    p.add_argument("out_dir")
    p.add_argument("--combine", choices=("and", "or"))
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("pipeline", help="enhance, grid and segment one image")
    p.add_argument("out_dir")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="image to process")
    src.add_argument("--synth", help="synth spec JSON to generate and process")
    p.add_argument("--grid-source", choices=pipeline.SOURCES)
    p.add_argument("--combine", choices=("and", "or"))
    p.add_argument("--beta", type=float)
    _add_gabor_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("enroll", help="train the network on a gallery manifest")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", help="exit 1 when training does not converge")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("match", help="accept or reject one probe")
    p.add_argument("model")
    p.add_argument("gallery")
    p.add_argument("probe")
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="score genuine and impostor probe sets")
    p.add_argument("model")
    p.add_argument("gallery")
    p.add_argument("probes", help="JSON {genuine: [{id, image_path}], impostor: [{image_path}]}")
    p.add_argument("--tau", type=float)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--dims", default="4x4x3", help="IN_HxIN_WxN")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("curves", help="training trace to CSV (epoch, sse, eta)")
    p.add_argument("trace")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_curves)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    line = " ".join(str(message).split())
    print(f"error:{code}:{line}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    is_match = args.command == "match"
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(exc.code, exc, 2)
    except ParseError as exc:
        return _fail(exc.code, exc, 2)
    except CdnaError as exc:
        return _fail(exc.code, exc, 2 if is_match else 1)
    except DomainFailure as exc:
        return _fail(exc.code, exc, 2 if is_match else 1)
    except (ValueError, OSError) as exc:
        return _fail("usage", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
