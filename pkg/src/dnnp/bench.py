"""Benchmark and verification harness for the convolution engines.

Reads a suite file of layer configurations (one per line: name plus the
eleven convolution parameters), times each layer under each engine on
seeded pseudo-random inputs, accounts flops as 2*N*K*C*R*S*P*Q, and can
cross-check every engine against the direct one. Results go out as CSV
and/or JSON plus a human-readable table; a sweep mode reports throughput
across mini-batch sizes relative to the best in the sweep.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import statistics
import sys
import time
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .conv import (
    ConvDesc,
    Engine,
    FilterView,
    as_engine,
    conv_forward,
    conv_out_shape,
    make_filter_desc,
)
from .errors import ConfigInvalid, DnnpError, ParseError, VerifyFailed
from .tensor import TensorView, as_dtype, empty_view, make_desc

CSV_FIELDS = ("layer", "engine", "dtype", "batch", "flops", "seconds",
              "gflops", "peak_pct", "max_abs_err")

ENGINE_LABELS = {
    Engine.DIRECT: "direct",
    Engine.EXPLICIT: "explicit",
    Engine.IMPLICIT: "implicit",
}

VERIFY_TOLERANCE = {"f32": 1e-4, "f64": 1e-10}  # absolute, vs direct engine

DEFAULT_VERIFY_BATCH = 16
DEFAULT_REPEATS = 5
DEFAULT_SEED = 2014


@dataclass(frozen=True)
class LayerConfig:
    """One benchmark layer: a name plus the full convolution parameter set."""

    name: str
    n: int
    c: int
    h: int
    w: int
    k: int
    r: int
    s: int
    u: int = 1
    v: int = 1
    pad_h: int = 0
    pad_w: int = 0

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "LayerConfig":
        parts = line.split()
        if len(parts) != 12:
            raise ParseError(
                f"line {lineno}: expected 'name N C H W K R S u v pad_h pad_w', "
                f"got {len(parts)} fields")
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError as e:
            raise ParseError(f"line {lineno}: {e}") from None
        return cls(parts[0], *nums)

    def validate(self) -> None:
        try:
            conv_out_shape(
                make_desc(self.n, self.c, self.h, self.w),
                make_filter_desc(self.k, self.c, self.r, self.s),
                ConvDesc(self.u, self.v, self.pad_h, self.pad_w))
        except DnnpError as e:
            raise ConfigInvalid(f"layer {self.name}: {e}") from None

    def out_hw(self) -> tuple[int, int]:
        shape = conv_out_shape(
            make_desc(self.n, self.c, self.h, self.w),
            make_filter_desc(self.k, self.c, self.r, self.s),
            ConvDesc(self.u, self.v, self.pad_h, self.pad_w))
        return shape[2], shape[3]


def parse_suite(text: str) -> list[LayerConfig]:
    """Parse suite text: '#' comments and blank lines are skipped."""
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        layers.append(LayerConfig.from_line(line, lineno))
    if not layers:
        raise ParseError("suite contains no layers")
    return layers


def load_suite(source: str) -> list[LayerConfig]:
    """Load a suite from a path, falling back to the bundled suites."""
    path = Path(source)
    if path.exists():
        return parse_suite(path.read_text())
    name = source if source.endswith(".suite") else source + ".suite"
    bundle = resources.files("dnnp").joinpath("suites", name)
    if bundle.is_file():
        return parse_suite(bundle.read_text())
    raise ParseError(f"no such suite file: {source}")


def flop_count(cfg: LayerConfig) -> int:
    """2 * N * K * C * R * S * P * Q (one multiply-add = 2 flops)."""
    p, q = cfg.out_hw()
    return 2 * cfg.n * cfg.k * cfg.c * cfg.r * cfg.s * p * q


def peak_percent(gflops: float, peak_gflops: float) -> float:
    return 100.0 * gflops / peak_gflops


@dataclass
class BenchResult:
    """One timed row; gflops = flops / seconds / 1e9."""

    layer: str
    engine: str
    dtype: str
    batch: int | None
    flops: int | None
    seconds: float | None
    gflops: float | None
    peak_pct: float | None
    max_abs_err: float | None


def _layer_inputs(cfg: LayerConfig, dtype, seed, index):
    rng = np.random.default_rng([seed, index])
    xa = rng.uniform(-0.5, 0.5, (cfg.n, cfg.c, cfg.h, cfg.w))
    fa = rng.uniform(-0.5, 0.5, (cfg.k, cfg.c, cfg.r, cfg.s))
    x = TensorView.from_array(xa.astype(dtype))
    f = FilterView.from_array(fa.astype(dtype))
    return x, f


def _run_layer(cfg: LayerConfig, engine: Engine, dtype, x, f,
               repeats: int, threads: int):
    conv = ConvDesc(cfg.u, cfg.v, cfg.pad_h, cfg.pad_w)
    shape = conv_out_shape(x.desc, f.desc, conv)
    y = empty_view(make_desc(*shape, elem_type=dtype))
    conv_forward(x, f, conv, engine, y, threads=threads)  # warmup
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        conv_forward(x, f, conv, engine, y, threads=threads)
        times.append(time.perf_counter() - t0)
    return y, statistics.median(times)


def run_suite(layers, engines=None, elem_type="f32", batch: int | None = None,
              repeats: int = DEFAULT_REPEATS, threads: int = 1,
              verify: bool = False, peak: float | None = None,
              seed: int = DEFAULT_SEED,
              progress=None) -> list[BenchResult]:
    """Time every layer under every engine; optionally verify against the
    direct engine at the per-dtype absolute tolerance.

    Appends per-engine summary rows: 'suite_mean' (arithmetic mean of the
    layer rates) and 'suite_weighted' (total flops over total seconds).
    Raises VerifyFailed (carrying the completed results) if any engine
    strays beyond tolerance.
    """
    engines = [as_engine(e) for e in (engines or list(Engine))]
    dtype = as_dtype(elem_type)
    dtype_name = "f32" if dtype == np.float32 else "f64"
    if verify and batch is None:
        batch = DEFAULT_VERIFY_BATCH
    results: list[BenchResult] = []
    failures: list[str] = []
    per_engine: dict[Engine, list[BenchResult]] = {e: [] for e in engines}
    for index, base_cfg in enumerate(layers):
        cfg = replace(base_cfg, n=batch) if batch else base_cfg
        cfg.validate()
        flops = flop_count(cfg)
        x, f = _layer_inputs(cfg, dtype, seed, index)
        reference = None
        if verify:
            ref_y, _ = _run_layer(cfg, Engine.DIRECT, dtype, x, f, 1, threads)
            reference = np.ascontiguousarray(ref_y.array)
        for engine in engines:
            if progress:
                progress(f"{cfg.name} [{ENGINE_LABELS[engine]}/{dtype_name}]")
            y, seconds = _run_layer(cfg, engine, dtype, x, f, repeats, threads)
            gflops = flops / seconds / 1e9
            err = None
            if verify:
                err = float(np.abs(y.array - reference).max())
                if err > VERIFY_TOLERANCE[dtype_name]:
                    failures.append(
                        f"{cfg.name}/{ENGINE_LABELS[engine]}: {err:.3e}")
            row = BenchResult(
                layer=cfg.name, engine=ENGINE_LABELS[engine],
                dtype=dtype_name, batch=cfg.n, flops=flops, seconds=seconds,
                gflops=gflops,
                peak_pct=peak_percent(gflops, peak) if peak else None,
                max_abs_err=err)
            results.append(row)
            per_engine[engine].append(row)
    for engine in engines:
        rows = per_engine[engine]
        if not rows:
            continue
        mean_gflops = sum(r.gflops for r in rows) / len(rows)
        total_flops = sum(r.flops for r in rows)
        total_seconds = sum(r.seconds for r in rows)
        weighted = total_flops / total_seconds / 1e9
        results.append(BenchResult(
            "suite_mean", ENGINE_LABELS[engine], dtype_name, batch, None,
            None, mean_gflops,
            peak_percent(mean_gflops, peak) if peak else None, None))
        results.append(BenchResult(
            "suite_weighted", ENGINE_LABELS[engine], dtype_name, batch,
            total_flops, total_seconds, weighted,
            peak_percent(weighted, peak) if peak else None, None))
    if failures:
        raise VerifyFailed(
            "verification failures: " + "; ".join(failures), results=results)
    return results


@dataclass
class SweepRow:
    """One point of a batch-size sweep; ratio_pct is relative to the best
    throughput observed anywhere in the same sweep."""

    layer: str
    engine: str
    dtype: str
    batch: int
    flops: int
    seconds: float
    gflops: float
    ratio_pct: float


def batch_sweep(cfg: LayerConfig, batches, engine, elem_type="f32",
                repeats: int = DEFAULT_REPEATS, threads: int = 1,
                seed: int = DEFAULT_SEED,
                progress=None) -> list[SweepRow]:
    """Throughput of one layer/engine across mini-batch sizes."""
    engine = as_engine(engine)
    dtype = as_dtype(elem_type)
    dtype_name = "f32" if dtype == np.float32 else "f64"
    measured = []
    for batch in batches:
        run_cfg = replace(cfg, n=int(batch))
        run_cfg.validate()
        if progress:
            progress(f"{run_cfg.name} batch={batch}")
        flops = flop_count(run_cfg)
        x, f = _layer_inputs(run_cfg, dtype, seed, int(batch))
        _, seconds = _run_layer(run_cfg, engine, dtype, x, f, repeats, threads)
        measured.append((int(batch), flops, seconds, flops / seconds / 1e9))
    best = max(g for _, _, _, g in measured)
    return [SweepRow(cfg.name, ENGINE_LABELS[engine], dtype_name, b, fl, sec,
                     g, 100.0 * g / best)
            for b, fl, sec, g in measured]


def emit_csv(results, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(CSV_FIELDS)
    for r in results:
        writer.writerow(
            ["" if getattr(r, k) is None else repr(getattr(r, k))
             if isinstance(getattr(r, k), float) else getattr(r, k)
             for k in CSV_FIELDS])


def read_csv(fh) -> list[BenchResult]:
    rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ParseError("bad CSV header")
    out = []
    for row in rows[1:]:
        vals = dict(zip(CSV_FIELDS, row))
        out.append(BenchResult(
            layer=vals["layer"], engine=vals["engine"], dtype=vals["dtype"],
            batch=int(vals["batch"]) if vals["batch"] else None,
            flops=int(vals["flops"]) if vals["flops"] else None,
            seconds=float(vals["seconds"]) if vals["seconds"] else None,
            gflops=float(vals["gflops"]) if vals["gflops"] else None,
            peak_pct=float(vals["peak_pct"]) if vals["peak_pct"] else None,
            max_abs_err=(float(vals["max_abs_err"])
                         if vals["max_abs_err"] else None)))
    return out


def emit_json(results, fh) -> None:
    json.dump([asdict(r) for r in results], fh, indent=2)
    fh.write("\n")


def read_json(fh) -> list[BenchResult]:
    return [BenchResult(**d) for d in json.load(fh)]


def format_table(results) -> str:
    """Human-readable fixed-width result table."""
    lines = [f"{'layer':<16}{'engine':<10}{'dtype':<6}{'batch':>6}"
             f"{'gflops':>10}{'peak':>7}{'max_err':>11}"]
    for r in results:
        peak = f"{r.peak_pct:.0f}%" if r.peak_pct is not None else "-"
        err = f"{r.max_abs_err:.2e}" if r.max_abs_err is not None else "-"
        gf = f"{r.gflops:.2f}" if r.gflops is not None else "-"
        batch = r.batch if r.batch is not None else "-"
        lines.append(f"{r.layer:<16}{r.engine:<10}{r.dtype:<6}{batch:>6}"
                     f"{gf:>10}{peak:>7}{err:>11}")
    return "\n".join(lines)


def format_sweep_table(rows) -> str:
    lines = [f"{'layer':<16}{'engine':<10}{'dtype':<6}{'batch':>6}"
             f"{'gflops':>10}{'ratio':>7}"]
    for r in rows:
        lines.append(f"{r.layer:<16}{r.engine:<10}{r.dtype:<6}{r.batch:>6}"
                     f"{r.gflops:>10.2f}{r.ratio_pct:>6.0f}%")
    return "\n".join(lines)


SWEEP_FIELDS = ("layer", "engine", "dtype", "batch", "flops", "seconds",
                "gflops", "ratio_pct")


def emit_sweep_csv(rows, fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(SWEEP_FIELDS)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v
                         for v in (getattr(r, k) for k in SWEEP_FIELDS)])


def emit_sweep_json(rows, fh) -> None:
    json.dump([asdict(r) for r in rows], fh, indent=2)
    fh.write("\n")


def _write_outputs(rows, formats, out, csv_emit, json_emit) -> None:
    for fmt in formats:
        if out:
            base = Path(out)
            if len(formats) == 1:
                path = base
            else:
                path = base.with_suffix("." + fmt)
            with open(path, "w", newline="") as fh:
                (csv_emit if fmt == "csv" else json_emit)(rows, fh)
        else:
            buf = io.StringIO()
            (csv_emit if fmt == "csv" else json_emit)(rows, buf)
            sys.stdout.write(buf.getvalue())


def _parse_formats(spec: str) -> list[str]:
    formats = [f.strip().lower() for f in spec.split(",") if f.strip()]
    for f in formats:
        if f not in ("csv", "json"):
            raise ParseError(f"unknown output format {f!r}")
    return formats or ["csv"]


def _progress_printer(quiet: bool):
    if quiet:
        return None

    def show(msg):
        print(f"  running {msg}", file=sys.stderr, flush=True)

    return show


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnnp-bench",
        description="Benchmark and verify the convolution engines.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--suite", default="table2.suite",
                       help="suite file path or bundled suite name")
        p.add_argument("--dtype", default="f32", choices=("f32", "f64"))
        p.add_argument("--batch", type=int, default=None,
                       help="override the mini-batch size of every layer")
        p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS,
                       help="timed runs per layer (median is reported)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads inside the engines")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--format", default="csv",
                       help="output serialization: csv, json, or csv,json")
        p.add_argument("--out", default=None,
                       help="output file (suffix per format when emitting both)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress lines on stderr")

    run = sub.add_parser("run", help="time (and optionally verify) a suite")
    common(run)
    run.add_argument("--engines", default="direct,explicit,implicit",
                     help="comma-separated engine list")
    run.add_argument("--verify", action="store_true",
                     help="compare every engine against the direct oracle")
    run.add_argument("--peak", type=float, default=None,
                     help="peak GFLOPS for utilization percentages")

    sweep = sub.add_parser("sweep", help="throughput across batch sizes")
    common(sweep)
    sweep.add_argument("--layer", required=True,
                       help="layer name from the suite")
    sweep.add_argument("--engine", default="implicit")
    sweep.add_argument("--batches", default="16,32,64,128",
                       help="comma-separated batch sizes")
    return parser


def _cmd_run(args) -> int:
    layers = load_suite(args.suite)
    engines = [as_engine(e) for e in args.engines.split(",") if e]
    formats = _parse_formats(args.format)
    progress = _progress_printer(args.quiet)
    try:
        results = run_suite(
            layers, engines=engines, elem_type=args.dtype, batch=args.batch,
            repeats=args.repeats, threads=args.threads, verify=args.verify,
            peak=args.peak, seed=args.seed, progress=progress)
        failed = False
    except VerifyFailed as e:
        print(f"VERIFY FAILED: {e}", file=sys.stderr)
        results = e.results
        failed = True
    _write_outputs(results, formats, args.out, emit_csv, emit_json)
    print(format_table(results))
    return 2 if failed else 0


def _cmd_sweep(args) -> int:
    layers = load_suite(args.suite)
    by_name = {l.name: l for l in layers}
    if args.layer not in by_name:
        raise ConfigInvalid(
            f"layer {args.layer!r} not in suite ({', '.join(by_name)})")
    batches = [int(b) for b in args.batches.split(",") if b]
    if not batches:
        raise ConfigInvalid("empty batch list")
    formats = _parse_formats(args.format)
    rows = batch_sweep(
        by_name[args.layer], batches, args.engine, elem_type=args.dtype,
        repeats=args.repeats, threads=args.threads, seed=args.seed,
        progress=_progress_printer(args.quiet))
    _write_outputs(rows, formats, args.out, emit_sweep_csv, emit_sweep_json)
    print(format_sweep_table(rows))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except VerifyFailed as e:  # pragma: no cover - handled in _cmd_run
        print(f"VERIFY FAILED: {e}", file=sys.stderr)
        return 2
    except DnnpError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
