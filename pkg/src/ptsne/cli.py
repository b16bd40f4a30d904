"""Batch command line: embed, density, cluster, entropy-demo and pipeline.

Settings are layered: built-in defaults, then a ``key = value`` config file
(``--config``), then a previous run's manifest (``--from-manifest``), then
explicit flags. Exit codes: 0 ok, 2 configuration error, 3 data or I/O
error, 4 numerical failure.
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import data, kernels, orchestrator, pakde, plots, similarity, wtt
from .errors import ConfigError, DataError, NumericalError, PtsneError, WorkerError

log = logging.getLogger("ptsne")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

CSV_DOC = """output files (all CSV with a header row):
  embedding.csv        index,x,y        per-point mean over layers
  layer_K.csv          index,x,y        positions in layer K (1-based)
  trace.csv            epoch,round,avg_cost,avg_size
  global_trace.csv     epoch,global_cost           (--global-cost)
  bandwidths.csv       index,beta,h
  raster_geometry.csv  x0,y0,cell_size,width,height
  raster_values.csv    one row per grid row, bottom row first
  raster.pgm           plain PGM (P2), 16-bit, top row first
  labels.csv           cluster label per cell, bottom row first
  peaks.csv            label,cell_x,cell_y,density
  point_labels.csv     index,label
  entropy.csv          size,mean_normalized_entropy
"""

# name -> (type, default, help); None default means "not set"
EMBED_OPTS = {
    "in": (str, None, "input matrix file"),
    "format": (str, "csv", "csv or rawbin"),
    "distances": (bool, False, "input is a precomputed distance matrix"),
    "header": (bool, False, "CSV input has a header row"),
    "whiten": (int, None, "PCA-whiten and keep this many dimensions"),
    "labels": (str, None, "CSV of integer labels used to colour the scatter plot"),
    "ppx": (float, 30.0, "perplexity"),
    "threads": (int, 4, "number of partial t-SNE workers"),
    "layers": (int, 2, "chunks per worker (overlap between workers)"),
    "rounds": (int, 1, "number of rounds"),
    "seed": (int, 1, "master random seed"),
    "epochs": (int, None, "epochs per round (default ceil(sqrt(n)))"),
    "iters": (int, None, "iterations per epoch (default ceil(sqrt(z)))"),
    "cores": (int, None, "maximum simultaneously running workers"),
    "lr_points": (str, "local", "point count in the learning rate: local or global"),
    "global_cost": (bool, False, "also record the full-data cost each epoch (O(n^2))"),
}
DENSITY_OPTS = {
    "embedding": (str, None, "embedding CSV (index,x,y)"),
    "ppx": (float, 30.0, "perplexity for the adaptive bandwidths"),
    "grid": (int, pakde.DEFAULT_GRID, "cells per axis"),
    "margin": (float, pakde.DEFAULT_MARGIN, "grid margin in maximum bandwidths"),
    "fixed_h": (float, None, "also emit a fixed-bandwidth raster with this h"),
    "truncate": (float, None, "truncate kernels at this many bandwidths"),
}
CLUSTER_OPTS = {
    "raster": (str, None, "raster values CSV (or PGM) from the density stage"),
    "geometry": (str, None, "raster geometry CSV (default: raster_geometry.csv next to --raster)"),
    "embedding": (str, None, "embedding CSV to label points"),
}
ENTROPY_OPTS = {
    "sizes": (str, "100,1000,10000", "comma-separated ascending sizes"),
    "samples": (int, 100, "samples per size"),
    "seed": (int, 1, "random seed"),
}
PIPELINE_OPTS = {
    **{k: v for k, v in EMBED_OPTS.items()},
    "gen_gmm": (str, None, "synthesize input: dims=5,components=8,n=2000,seed=3[,separation=10]"),
    "kde_ppx": (float, None, "perplexity for the density stage (default: --ppx)"),
    "grid": DENSITY_OPTS["grid"],
    "margin": DENSITY_OPTS["margin"],
    "fixed_h": DENSITY_OPTS["fixed_h"],
    "truncate": DENSITY_OPTS["truncate"],
}
COMMANDS = {
    "embed": (EMBED_OPTS, "run parallelized t-SNE"),
    "density": (DENSITY_OPTS, "perplexity-adaptive density raster"),
    "cluster": (CLUSTER_OPTS, "water-track segmentation of a density raster"),
    "entropy-demo": (ENTROPY_OPTS, "normalized entropy versus sample size"),
    "pipeline": (PIPELINE_OPTS, "embed, density and cluster in one run"),
}


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ptsne", description=__doc__.splitlines()[0],
        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_DOC)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, (opts, help_) in COMMANDS.items():
        p = sub.add_parser(cmd, help=help_, epilog=CSV_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        p.add_argument("--config", default=argparse.SUPPRESS, help="key = value settings file")
        p.add_argument("--from-manifest", default=argparse.SUPPRESS, help="replay settings from a manifest")
        for name, (typ, default, h) in opts.items():
            dest = name
            if typ is bool:
                p.add_argument(_flag(name), dest=dest, action="store_true", default=argparse.SUPPRESS, help=h)
            else:
                p.add_argument(_flag(name), dest=dest, type=typ, default=argparse.SUPPRESS,
                               help=h if default is None else f"{h} (default: {default})")
    return parser


def read_config_file(path, opts):
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().lstrip("-").replace("-", "_")
        if not sep or key not in opts:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        typ = opts[key][0]
        val = val.strip()
        try:
            out[key] = val.lower() in ("1", "true", "yes", "on") if typ is bool else typ(val)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from None
    return out


def resolve(command, ns):
    """Merge defaults, config file, manifest and flags into one settings dict."""
    opts = COMMANDS[command][0]
    cfg = {k: v[1] for k, v in opts.items()}
    cfg["out"] = None
    given = vars(ns)
    if "config" in given:
        cfg.update(read_config_file(given["config"], opts))
    if "from_manifest" in given:
        man = json.loads(Path(given["from_manifest"]).read_text())
        if man.get("command") != command:
            raise ConfigError(f"manifest was written by {man.get('command')!r}, not {command!r}")
        cfg.update({k: v for k, v in man["config"].items() if k in cfg})
    cfg.update({k: v for k, v in given.items() if k in cfg})
    if cfg["out"] is None:
        raise ConfigError("--out is required")
    return cfg


def _digest(path=None, payload=None):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes() if path is not None else payload)
    return h.hexdigest()


def _write_points(path, Y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(Y):
            w.writerow([i, repr(float(x)), repr(float(y))])


def read_points(path):
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (ValueError, OSError) as exc:
        raise DataError(f"cannot read embedding {path}: {exc}") from None
    if rows.shape[1] != 3:
        raise DataError(f"{path}: expected columns index,x,y")
    if not np.isfinite(rows).all():
        raise DataError(f"{path}: non-finite coordinates")
    order = np.argsort(rows[:, 0], kind="stable")
    return rows[order, 1:]


def read_labels(path, n):
    vals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                vals.append(int(float(row[-1])))
            except ValueError:
                if vals:
                    raise DataError(f"{path}: bad label {row[-1]!r}") from None
    if len(vals) != n:
        raise DataError(f"{path}: {len(vals)} labels for {n} points")
    return np.array(vals)


def write_manifest(out, command, cfg, digest, outputs, timings, extra=None):
    man = {
        "command": command,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        "input_digest": digest,
        "outputs": outputs,
        "timings": timings,
        "backend": kernels.BACKEND,
    }
    man.update(extra or {})
    (Path(out) / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


# ---------------------------------------------------------------- stages

def load_input(cfg):
    """Return ``(source, labels, digest)`` from ``--in`` or ``--gen-gmm``."""
    labels = None
    if cfg.get("gen_gmm"):
        spec = data.GmmSpec.parse(cfg["gen_gmm"])
        src, labels = data.generate_gmm(spec)
        digest = _digest(payload=src.matrix.tobytes())
    else:
        if not cfg.get("in"):
            raise ConfigError("--in is required")
        src = data.load_matrix(cfg["in"], cfg["format"], cfg["distances"], cfg["header"])
        digest = _digest(cfg["in"])
    if cfg.get("whiten"):
        src = data.whiten(src, cfg["whiten"])
    if cfg.get("labels"):
        labels = read_labels(cfg["labels"], src.n)
    return src, labels, digest


def stage_embed(cfg, src, labels, out):
    out.mkdir(parents=True, exist_ok=True)
    config = orchestrator.PtsneConfig(
        threads=cfg["threads"], layers=cfg["layers"], rounds=cfg["rounds"], ppx=cfg["ppx"],
        seed=cfg["seed"], epochs=cfg["epochs"], iters=cfg["iters"], cores=cfg["cores"],
        lr_points=cfg["lr_points"])
    globals_ = []
    on_epoch = None
    if cfg["global_cost"]:
        P = orchestrator.global_affinity(src, config)

        def on_epoch(state):
            globals_.append(orchestrator.global_cost(state, src, config, P=P))

    with open(out / "trace.csv", "w") as fh:
        state = orchestrator.run_ptsne(src, config, orchestrator.TraceWriter(fh), on_epoch)
    _write_points(out / "embedding.csv", state.embedding)
    outputs = {"embedding": "embedding.csv", "trace": "trace.csv"}
    for k in range(config.layers):
        name = f"layer_{k + 1}.csv"
        _write_points(out / name, state.layer_positions[k])
        outputs[f"layer_{k + 1}"] = name
    if cfg["global_cost"]:
        with open(out / "global_trace.csv", "w") as fh:
            fh.write("epoch,global_cost\n")
            for rec, g in zip(state.trace, globals_):
                fh.write(f"{rec.epoch},{g!r}\n")
        outputs["global_trace"] = "global_trace.csv"
    plots.scatter(out / "embedding.svg", state.embedding, labels)
    plots.trace(out / "trace.svg", state.trace, globals_ or None)
    outputs.update(scatter="embedding.svg", trace_plot="trace.svg")
    return state, outputs


def write_pgm(path, values):
    top = values.max()
    scaled = np.zeros(values.shape, dtype=np.int64) if top <= 0 else np.rint(values / top * 65535).astype(np.int64)
    h, w = values.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{w} {h}\n65535\n")
        for row in scaled[::-1]:
            fh.write(" ".join(map(str, row)) + "\n")


def read_pgm(path):
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise DataError(f"{path}: not a plain PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array(tokens[4:4 + w * h], dtype=np.float64)
    if vals.size != w * h:
        raise DataError(f"{path}: truncated PGM")
    return vals.reshape(h, w)[::-1] / maxval


def _write_raster(out, stem, raster):
    write_pgm(out / f"{stem}.pgm", raster.values)
    with open(out / f"{stem}_values.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in raster.values:
            w.writerow([repr(float(v)) for v in row])
    return {stem: f"{stem}.pgm", f"{stem}_values": f"{stem}_values.csv"}


def _write_geometry(path, raster):
    with open(path, "w") as fh:
        fh.write("x0,y0,cell_size,width,height\n")
        fh.write(f"{raster.x0!r},{raster.y0!r},{raster.cell_size!r},{raster.width},{raster.height}\n")


def read_geometry(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        g = rows[0]
        return float(g["x0"]), float(g["y0"]), float(g["cell_size"]), int(g["width"]), int(g["height"])
    except (OSError, KeyError, IndexError, ValueError) as exc:
        raise DataError(f"cannot read raster geometry {path}: {exc}") from None


def stage_density(cfg, Y, out):
    out.mkdir(parents=True, exist_ok=True)
    n = Y.shape[0]
    ppx = cfg["ppx"]
    if n < 3:
        h = cfg["fixed_h"] or 1.0
        log.warning("%d points: too few to calibrate bandwidths, using h=%g", n, h)
        bw = pakde.fixed_bandwidths(n, h)
    else:
        if ppx > n - 1:
            log.warning("perplexity %g exceeds n - 1; using %d", ppx, n - 1)
            ppx = n - 1
        bw = pakde.kde_bandwidths(Y, ppx)
    raster = pakde.estimate_density(Y, bw, cfg["grid"], cfg["margin"], cfg["truncate"])
    outputs = _write_raster(out, "raster", raster)
    _write_geometry(out / "raster_geometry.csv", raster)
    with open(out / "bandwidths.csv", "w") as fh:
        fh.write("index,beta,h\n")
        for i, (b, h) in enumerate(zip(bw.betas, bw.h)):
            fh.write(f"{i},{b!r},{h!r}\n")
    plots.raster(out / "density.svg", raster)
    outputs.update(geometry="raster_geometry.csv", bandwidths="bandwidths.csv", plot="density.svg")
    masses = {"total_mass": raster.total_mass}
    if cfg["fixed_h"]:
        fixed = pakde.estimate_density(
            Y, pakde.fixed_bandwidths(n, cfg["fixed_h"]), truncate=cfg["truncate"],
            geometry=(raster.x0, raster.y0, raster.cell_size, raster.width, raster.height))
        outputs.update(_write_raster(out, "raster_fixed", fixed))
        plots.raster(out / "density_fixed.svg", fixed, title=f"fixed h={cfg['fixed_h']}")
        outputs["plot_fixed"] = "density_fixed.svg"
        masses["total_mass_fixed"] = fixed.total_mass
    return raster, outputs, masses


def load_raster(cfg):
    path = Path(cfg["raster"])
    if not path.is_file():
        raise DataError(f"raster {path} not found")
    geo_path = Path(cfg["geometry"]) if cfg.get("geometry") else path.with_name("raster_geometry.csv")
    x0, y0, S, w, h = read_geometry(geo_path)
    if path.suffix == ".pgm":
        values = read_pgm(path)
    else:
        try:
            values = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DataError(f"cannot read raster {path}: {exc}") from None
    if values.shape != (h, w):
        raise DataError(f"raster is {values.shape}, geometry says {(h, w)}")
    return pakde.DensityRaster(x0, y0, S, values)


def stage_cluster(raster, Y, out):
    out.mkdir(parents=True, exist_ok=True)
    seg = wtt.water_track(raster)
    np.savetxt(out / "labels.csv", seg.labels, fmt="%d", delimiter=",")
    with open(out / "peaks.csv", "w") as fh:
        fh.write("label,cell_x,cell_y,density\n")
        for k, ((iy, ix), d) in enumerate(seg.peaks, start=1):
            fh.write(f"{k},{ix},{iy},{d!r}\n")
    outputs = {"labels": "labels.csv", "peaks": "peaks.csv"}
    if Y is not None:
        lab = wtt.label_points(seg, raster, Y)
        with open(out / "point_labels.csv", "w") as fh:
            fh.write("index,label\n")
            for i, v in enumerate(lab):
                fh.write(f"{i},{v}\n")
        outputs["point_labels"] = "point_labels.csv"
    plots.raster(out / "clusters.svg", raster, seg.labels, title=f"{seg.n_clusters} clusters")
    outputs["plot"] = "clusters.svg"
    return seg, outputs


# ---------------------------------------------------------------- commands

def cmd_embed(cfg):
    out = Path(cfg["out"])
    t0 = time.perf_counter()
    src, labels, digest = load_input(cfg)
    t1 = time.perf_counter()
    _, outputs = stage_embed(cfg, src, labels, out)
    t2 = time.perf_counter()
    write_manifest(out, "embed", cfg, digest, outputs, {"load": t1 - t0, "embed": t2 - t1})


def cmd_density(cfg):
    out = Path(cfg["out"])
    if not cfg["embedding"]:
        raise ConfigError("--embedding is required")
    t0 = time.perf_counter()
    Y = read_points(cfg["embedding"])
    _, outputs, masses = stage_density(cfg, Y, out)
    write_manifest(out, "density", cfg, _digest(cfg["embedding"]), outputs,
                   {"density": time.perf_counter() - t0})
    for k, v in masses.items():
        print(f"{k}={v!r}")


def cmd_cluster(cfg):
    out = Path(cfg["out"])
    if not cfg["raster"]:
        raise ConfigError("--raster is required")
    t0 = time.perf_counter()
    raster = load_raster(cfg)
    Y = read_points(cfg["embedding"]) if cfg["embedding"] else None
    seg, outputs = stage_cluster(raster, Y, out)
    write_manifest(out, "cluster", cfg, _digest(cfg["raster"]), outputs,
                   {"cluster": time.perf_counter() - t0})
    print(f"clusters={seg.n_clusters}")


def cmd_entropy_demo(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        sizes = [int(s) for s in str(cfg["sizes"]).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad --sizes {cfg['sizes']!r}") from None
    t0 = time.perf_counter()
    table = similarity.normalized_entropy_experiment(sizes, cfg["samples"], cfg["seed"])
    with open(out / "entropy.csv", "w") as fh:
        fh.write("size,mean_normalized_entropy\n")
        for s, v in table:
            fh.write(f"{s},{v!r}\n")
    plots.entropy(out / "entropy.svg", table)
    write_manifest(out, "entropy-demo", cfg, None, {"table": "entropy.csv", "plot": "entropy.svg"},
                   {"entropy": time.perf_counter() - t0})


def cmd_pipeline(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    timings, outputs = {}, {}

    def record(stage_outputs, prefix):
        outputs.update({f"{prefix}/{k}": f"{prefix}/{v}" for k, v in stage_outputs.items()})

    def finish(extra=None):
        write_manifest(out, "pipeline", cfg, digest, outputs, timings, extra)

    t0 = time.perf_counter()
    src, labels, digest = load_input(cfg)
    if cfg.get("gen_gmm"):
        data.write_csv(out / "data.csv", src.matrix)
        np.savetxt(out / "data_labels.csv", labels, fmt="%d")
        outputs.update(data="data.csv", data_labels="data_labels.csv")
    t1 = time.perf_counter()
    timings["load"] = t1 - t0
    state, o = stage_embed(cfg, src, labels, out / "embed")
    record(o, "embed")
    t2 = time.perf_counter()
    timings["embed"] = t2 - t1
    Y = state.embedding
    dcfg = dict(cfg, ppx=cfg["kde_ppx"] or cfg["ppx"])
    try:
        raster, o, masses = stage_density(dcfg, Y, out / "density")
        record(o, "density")
        t3 = time.perf_counter()
        timings["density"] = t3 - t2
        seg, o = stage_cluster(raster, Y, out / "cluster")
        record(o, "cluster")
        timings["cluster"] = time.perf_counter() - t3
    except Exception:
        finish({"failed": True})
        raise
    finish({"clusters": seg.n_clusters, **masses})
    for k, v in masses.items():
        print(f"{k}={v!r}")
    print(f"clusters={seg.n_clusters}")


HANDLERS = {
    "embed": cmd_embed,
    "density": cmd_density,
    "cluster": cmd_cluster,
    "entropy-demo": cmd_entropy_demo,
    "pipeline": cmd_pipeline,
}


def _exit_code(exc):
    if isinstance(exc, WorkerError):
        exc = exc.error
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=ns.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    command = ns.command
    args = argparse.Namespace(**{k: v for k, v in vars(ns).items() if k not in ("command", "log_level")})
    try:
        cfg = resolve(command, args)
        HANDLERS[command](cfg)
    except (PtsneError, OSError, json.JSONDecodeError) as exc:
        print(f"ptsne {command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
