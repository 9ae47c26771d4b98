"""Command-line interface: ``generate``, ``embed``, ``evaluate`` and ``plot``.

File formats
------------
data CSV        header ``f0,f1,...``, one row per point
labels CSV      single column with header ``label``
embedding CSV   header ``id,x,y``
manifest JSON   config echo, paths, timing and affinity diagnostics
metrics JSON    ``{k, rnx_adjusted, laplacian: {...}, baseline: {...}}``

Floats are written with 17 significant digits so files round-trip exactly.
Exit status is 0 on success, 1 on a runtime failure (bad input, divergence,
I/O) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .core import DataMatrix, EmbedConfig, LabelVector, ValidationError
from .datagen import generate_synthetic
from .metrics import evaluate
from .optimizer import DivergenceError
from .pipeline import embed

log = logging.getLogger("rctsne")

# tab10 followed by the lighter tab20 tones
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
    "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
)


class CLIError(Exception):
    """Runtime failure reported to the user with exit status 1."""


# --- serialization ------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if not any(isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise CLIError(f"cannot serialize non-finite value {obj}")
        s = _fmt(obj)
        # keep floats recognizable as floats when they happen to be integral
        return s if any(c in s for c in ".e") else s + ".0"
    return json.dumps(obj)


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise CLIError(f"{path}: empty file")
    return rows[0], [r for r in rows[1:] if r]


def _floats(rows, path):
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise CLIError(f"{path}: non-numeric value ({exc})") from exc


def write_data(path, x: np.ndarray) -> None:
    head = ",".join(f"f{j}" for j in range(x.shape[1]))
    lines = [head] + [",".join(_fmt(v) for v in row) for row in x]
    _write_text(path, "\n".join(lines) + "\n")


def read_data(path) -> DataMatrix:
    head, rows = _read_rows(path)
    if head != [f"f{j}" for j in range(len(head))]:
        raise CLIError(f"{path}: expected header f0,f1,...")
    x = _floats(rows, path)
    if x.ndim != 2 or x.shape[1] != len(head):
        raise CLIError(f"{path}: rows must have {len(head)} columns")
    return DataMatrix(x)


def write_labels(path, labels: LabelVector) -> None:
    names = labels.names or tuple(str(c) for c in range(labels.n_classes))
    _write_text(path, "label\n" + "".join(names[c] + "\n" for c in labels.labels))


def read_labels(path) -> LabelVector:
    """Read a labels CSV; values map to class ids in order of first appearance."""
    head, rows = _read_rows(path)
    if head != ["label"] or any(len(r) != 1 for r in rows):
        raise CLIError(f"{path}: expected a single column with header 'label'")
    return LabelVector.from_values([r[0] for r in rows])


def write_embedding(path, coords: np.ndarray) -> None:
    if coords.shape[1] != 2:
        raise CLIError("embedding CSV holds 2-D coordinates only")
    lines = ["id,x,y"] + [f"{i},{_fmt(a)},{_fmt(b)}" for i, (a, b) in enumerate(coords)]
    _write_text(path, "\n".join(lines) + "\n")


def read_embedding(path) -> np.ndarray:
    head, rows = _read_rows(path)
    if head != ["id", "x", "y"]:
        raise CLIError(f"{path}: expected header id,x,y")
    a = _floats(rows, path)
    if a.ndim != 2 or a.shape[1] != 3:
        raise CLIError(f"{path}: rows must have 3 columns")
    ids = a[:, 0].astype(np.int64)
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise CLIError(f"{path}: ids must be 0..n-1")
    out = np.empty((len(ids), 2))
    out[ids] = a[:, 1:]
    return out


# --- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    config: dict
    inputs: dict
    outputs: dict
    seconds: float
    seed: int
    method: str
    diagnostics: dict
    loss_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seconds": self.seconds,
            "seed": self.seed,
            "method": self.method,
            "diagnostics": self.diagnostics,
            "loss_trace": [list(t) for t in self.loss_trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["config"], d["inputs"], d["outputs"], float(d["seconds"]), int(d["seed"]),
                   d["method"], d["diagnostics"], [tuple(t) for t in d.get("loss_trace", [])])

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig.from_dict(self.config)

    def save(self, path) -> None:
        _write_text(path, dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise CLIError(f"cannot load manifest {path}: {exc}") from exc


# --- commands -----------------------------------------------------------------

def cmd_generate(args) -> None:
    ds = generate_synthetic(args.seed)
    write_data(args.out_data, ds.data.values)
    if args.out_labels14:
        write_labels(args.out_labels14, ds.labels14)
    if args.out_labels56:
        write_labels(args.out_labels56, ds.labels56)


def _set_threads(n: Optional[int]) -> None:
    if n is None:
        return
    import numba

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise CLIError(f"--threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}]")
    numba.set_num_threads(n)


def cmd_embed(args, parser) -> None:
    data_path, labels_path = args.data, args.labels
    if args.from_manifest:
        prior = RunManifest.load(args.from_manifest)
        cfg = prior.embed_config()
        data_path = data_path or prior.inputs.get("data")
        labels_path = labels_path or prior.inputs.get("labels")
    else:
        if args.method in ("ctsne", "rctsne") and not args.labels:
            parser.error(f"--labels is required for --method {args.method}")
        try:
            cfg = EmbedConfig(
                method=args.method, perplexity=args.perplexity, beta=args.beta, theta=args.theta,
                epochs=args.epochs, variance_mode="on_" + args.variance_on, seed=args.seed,
            )
        except ValidationError as exc:
            parser.error(str(exc))
    if not data_path:
        parser.error("--data is required")
    _set_threads(args.threads)
    data = read_data(data_path)
    labels = read_labels(labels_path) if labels_path else None
    res = embed(data, labels, cfg)
    write_embedding(args.out, res.embedding.coords)
    log.info("embedded %d points in %.1f s", data.n, res.seconds)
    if args.manifest:
        RunManifest(
            config=cfg.to_dict(),
            inputs={"data": str(data_path), "labels": str(labels_path) if labels_path else None},
            outputs={"embedding": str(args.out), "manifest": str(args.manifest)},
            seconds=res.seconds,
            seed=cfg.seed,
            method=cfg.method,
            diagnostics=res.diagnostics.summary(),
            loss_trace=list(res.embedding.loss_trace),
        ).save(args.manifest)


def _parse_label_sets(specs, parser):
    out = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            parser.error(f"--labels expects name=path, got {spec!r}")
        out[name] = read_labels(path)
    return out


def cmd_evaluate(args, parser) -> None:
    data = read_data(args.data)
    coords = read_embedding(args.embedding)
    sets = _parse_label_sets(args.labels, parser)
    for name, lab in sets.items():
        if lab.n != data.n:
            raise CLIError(f"row-count mismatch: labels {name!r} has {lab.n} rows, data {data.n}")
    report = evaluate(data, coords, sets, k=args.k, subsample_fraction=args.subsample,
                      seed=args.seed, prior=args.prior)
    text = dumps(report.to_dict()) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _load_color_map(path, names):
    try:
        cmap = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CLIError(f"cannot read color map {path}: {exc}") from exc
    missing = [n for n in names if n not in cmap]
    if missing:
        raise CLIError(f"color map lacks entries for {missing}")
    return [str(cmap[n]) for n in names]


def render_svg(coords: np.ndarray, labels: LabelVector, colors: Sequence[str],
               title: Optional[str] = None, size: int = 600, radius: float = 2.5) -> str:
    """Standalone SVG scatter plot with one legend entry per class."""
    names = labels.names or tuple(str(c) for c in range(labels.n_classes))
    margin = 20.0
    top = 40.0 if title else margin
    legend_w = 150.0
    lo = coords.min(axis=0)
    span = float(np.max(coords.max(axis=0) - lo)) or 1.0
    scale = (size - margin - top) / span
    width = size + legend_w
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{size}" '
        f'viewBox="0 0 {width:.0f} {size}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{size}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="26" font-family="sans-serif" font-size="16" '
                   f'text-anchor="middle">{escape(title)}</text>')
    out.append('<g stroke="none" fill-opacity="0.8">')
    for (a, b), c in zip(coords, labels.labels):
        px = margin + (a - lo[0]) * scale
        py = size - margin - (b - lo[1]) * scale
        out.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="{radius}" fill="{colors[c]}"/>')
    out.append("</g>")
    out.append('<g font-family="sans-serif" font-size="12">')
    for c, name in enumerate(names):
        y = top + 20.0 * c
        out.append(f'<rect x="{size + 10}" y="{y:.0f}" width="12" height="12" fill="{colors[c]}"/>'
                   f'<text x="{size + 28}" y="{y + 10:.0f}">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args) -> None:
    coords = read_embedding(args.embedding)
    labels = read_labels(args.labels)
    if labels.n != len(coords):
        raise CLIError(f"row-count mismatch: labels {labels.n}, embedding {len(coords)}")
    names = labels.names or tuple(str(c) for c in range(labels.n_classes))
    if args.color_map:
        colors = _load_color_map(args.color_map, names)
    elif labels.n_classes > len(PALETTE):
        raise CLIError(f"{labels.n_classes} classes exceed the {len(PALETTE)}-color palette; "
                       "pass --color-map")
    else:
        colors = PALETTE[: labels.n_classes]
    _write_text(args.out, render_svg(coords, labels, colors, args.title))


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rctsne", description="t-SNE, ct-SNE and revised ct-SNE embeddings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the synthetic benchmark")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out-data", required=True)
    g.add_argument("--out-labels14")
    g.add_argument("--out-labels56")

    e = sub.add_parser("embed", help="embed a data CSV")
    e.add_argument("--method", choices=("tsne", "ctsne", "rctsne"), default="tsne")
    e.add_argument("--data")
    e.add_argument("--labels")
    e.add_argument("--perplexity", type=float, default=30.0)
    e.add_argument("--beta", type=float, default=1.0)
    e.add_argument("--theta", type=float, default=0.5)
    e.add_argument("--epochs", type=int, default=750)
    e.add_argument("--variance-on", choices=("p", "r"), default="p")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threads", type=int, help="numba worker threads")
    e.add_argument("--from-manifest", help="rerun the configuration echoed in a manifest")
    e.add_argument("--out", required=True)
    e.add_argument("--manifest")

    v = sub.add_parser("evaluate", help="score an embedding")
    v.add_argument("--data", required=True)
    v.add_argument("--embedding", required=True)
    v.add_argument("--labels", nargs="+", required=True, metavar="NAME=PATH")
    v.add_argument("--prior", help="label set used to balance R_NX (default: first)")
    v.add_argument("--k", type=int, default=30)
    v.add_argument("--subsample", type=float, default=1.0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")

    s = sub.add_parser("plot", help="render an embedding as SVG")
    s.add_argument("--embedding", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--color-map", help="JSON object mapping label to color")
    s.add_argument("--title")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate":
            cmd_generate(args)
        elif args.command == "embed":
            cmd_embed(args, parser)
        elif args.command == "evaluate":
            if args.prior and args.prior not in [s.partition("=")[0] for s in args.labels]:
                parser.error(f"--prior {args.prior!r} is not among the label sets")
            cmd_evaluate(args, parser)
        else:
            cmd_plot(args)
    except (CLIError, ValidationError, DivergenceError) as exc:
        print(f"rctsne {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
