"""Command-line entry point: ``covertime <subcommand> [flags]``.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .exact import MAX_DENSE_VERTICES, GreenSolver, green_matrix, rate_label, resolve_rate
from .gff import (
    covariance_factor,
    eval_centering,
    extremal_process,
    level_set,
    sample_dgff,
)
from .lattice import DomainShape, bulk_vertices, discretize_domain, wire_boundary

MAX_DESK_N = 5.5

FLAG_TABLE = """\
flags:
  --domain {square|disc|annulus:R|polygon:FILE}   domain shape (default square)
  --n FLOAT          scale; N = floor(e^n) (repeat or comma-separate for a grid)
  --rate {1|retuned} walk rate; retuned = 1/(2 pi)
  --replicas INT     number of replicas
  --seed INT         master seed; fixes all randomness
  --out PATH         output directory (nothing is written without it)
  --format {json|csv} per-replica record format (default json)
  --t FLOAT          boundary local time (ray-knight, gff-sample level sets)
  --u FLOAT          level for the h^2 <= u level set (gff-sample)
  --allow-large      permit n above %s (slow)
environment:
  COVERTIME_THREADS  cap on worker processes (default: all cores)
""" % MAX_DESK_N

SUBCOMMANDS = {
    "green": "Green function diagonal of the wired domain",
    "gff-sample": "sample DGFF fields",
    "extremes": "extremal process of sampled fields",
    "cover": "cover-time experiment",
    "phase-a": "unvisited-set statistics at t_A",
    "phase-b-race": "cover time of a planted set",
    "ray-knight": "isomorphism check on small squares",
    "onedim-laws": "1D downcrossing and local-time laws",
    "ballot": "ballot-rate diagnostic table",
    "race": "two-stage Poisson race",
}
NEEDS_N = {"green", "gff-sample", "extremes", "cover", "phase-a", "phase-b-race"}


class UsageError(Exception):
    pass


def parse_domain(text: str) -> DomainShape:
    if text == "square":
        return DomainShape.square()
    if text == "disc":
        return DomainShape.disc()
    kind, _, arg = text.partition(":")
    if kind == "annulus" and arg:
        try:
            return DomainShape.annulus(float(arg))
        except ValueError as err:
            raise UsageError(f"--domain annulus:R needs an inner radius in (0, 1): {err}") from None
    if kind == "polygon" and arg:
        path = Path(arg)
        try:
            if path.suffix == ".json":
                pts = json.loads(path.read_text())
            else:
                pts = np.loadtxt(path, ndmin=2).tolist()
            return DomainShape.from_polygon(pts)
        except (OSError, ValueError) as err:
            raise UsageError(f"--domain polygon:FILE could not be read: {err}") from None
    raise UsageError(f"--domain {text!r} not understood; use square, disc, annulus:R or polygon:FILE")


def _n_values(raw) -> list[float]:
    out = []
    for item in raw or []:
        for part in str(item).split(","):
            if part.strip():
                try:
                    out.append(float(part))
                except ValueError:
                    raise UsageError(f"--n expects numbers, got {part!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", default="square")
    common.add_argument("--n", action="append", metavar="FLOAT")
    common.add_argument("--rate", choices=["1", "retuned"], default=None)
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--t", type=float, default=None)
    common.add_argument("--u", type=float, default=None)
    common.add_argument("--allow-large", action="store_true")
    p = argparse.ArgumentParser(
        prog="covertime",
        description="Cover times of planar random walks with wired boundary.",
        epilog=FLAG_TABLE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"covertime {__version__}")
    sub = p.add_subparsers(dest="command", metavar="subcommand")
    for name, help_ in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_, epilog=FLAG_TABLE,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return p


def resolve(args) -> dict:
    """Validate flags and fill defaults; raises UsageError naming the flag."""
    cmd = args.command
    ns = _n_values(args.n)
    if cmd in NEEDS_N and not ns:
        raise UsageError(f"--n is required for {cmd}; pass e.g. --n 5")
    if any(n <= 1 for n in ns):
        raise UsageError("--n must exceed 1")
    if any(n > MAX_DESK_N for n in ns) and not args.allow_large:
        big = max(ns)
        secs = 0.24 * (math.exp(big) / 256) ** 2 * math.log(math.exp(big)) / math.log(256)
        raise UsageError(f"--n {big:g} exceeds {MAX_DESK_N}; roughly {secs:.1f} s per cover replica, add --allow-large to proceed")
    if args.replicas is not None and args.replicas < 1:
        raise UsageError("--replicas must be at least 1")
    if args.t is not None and args.t < 0:
        raise UsageError("--t must be nonnegative")
    default_rate = "retuned" if cmd in ("phase-a", "phase-b-race") else "1"
    cfg = {
        "command": cmd,
        "domain": args.domain,
        "shape": parse_domain(args.domain),
        "n": ns,
        "rate": args.rate or default_rate,
        "replicas": args.replicas,
        "seed": args.seed,
        "out": str(args.out) if args.out is not None else None,
        "format": args.format,
        "t": args.t,
        "u": args.u,
    }
    return cfg


def _echo(cfg: dict) -> None:
    shown = {k: v for k, v in cfg.items() if k != "shape"}
    shown["shape"] = cfg["shape"].to_dict()
    shown["rate"] = rate_label(resolve_rate(cfg["rate"]))
    shown["version"] = __version__
    print(json.dumps({"config": shown}, sort_keys=True))


def _write(out, name: str, rows: list[dict], summary: dict, cfg: dict) -> None:
    """Persist ad-hoc subcommand output through the experiment writer."""
    if out is None:
        return
    params = {k: v for k, v in cfg.items() if k != "shape"}
    params["shape"] = cfg["shape"].to_dict()
    res = ex.ResultRecord(name, params, rows, summary, provenance={"seed": cfg["seed"]})
    ex.persist(res, out, _FormatOnly(cfg["format"], params))


class _FormatOnly:
    """Minimal config stand-in for persist: format plus a digest of the flags."""

    def __init__(self, fmt: str, params: dict | None = None):
        self.format = fmt
        self._params = params

    def digest(self) -> str:
        blob = json.dumps(ex._plain(self._params), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _graphs(cfg: dict):
    for n in cfg["n"]:
        yield n, wire_boundary(discretize_domain(cfg["shape"], n))


def cmd_green(cfg: dict) -> dict:
    rows, summary = [], {}
    for n, g in _graphs(cfg):
        if g.size <= MAX_DENSE_VERTICES:
            d = green_matrix(g, cfg["rate"]).diag
        else:
            d = GreenSolver(g, cfg["rate"]).diagonal()
        for (a, b), v in zip(g.coords, d):
            rows.append({"n": n, "x": int(a), "y": int(b), "green_diagonal": float(v)})
        summary[f"n={n:g}"] = {"vertex_count": g.size, "diag_min": float(d.min()), "diag_max": float(d.max())}
    _write(cfg["out"], "green", rows, summary, cfg)
    return summary


def _fields(cfg: dict, n: float, g):
    f = covariance_factor(green_matrix(g, cfg["rate"]))
    for r in range(cfg["replicas"] or 1):
        yield r, sample_dgff(f, cfg["seed"], r)


def cmd_gff_sample(cfg: dict) -> dict:
    rows, summary = [], {}
    for n, g in _graphs(cfg):
        bulk = bulk_vertices(g.domain) if cfg["u"] is not None else None
        for r, h in _fields(cfg, n, g):
            row = {"n": n, "seed": cfg["seed"], "replica": r, "average": h.average,
                   "min": float(h.values.min()), "max": float(h.values.max())}
            if bulk is not None:
                row["level_set_size"] = int(len(level_set(h.values, cfg["u"], bulk)))
            if cfg["out"] is not None and cfg["format"] == "csv":
                Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
                h.to_csv(Path(cfg["out"]) / f"field_n{n:g}_r{r}.csv")
            else:
                row["values"] = h.values.tolist()
            rows.append(row)
        summary[f"n={n:g}"] = {"vertex_count": g.size,
                               "mean_min": float(np.mean([x["min"] for x in rows if x["n"] == n]))}
    _write(cfg["out"], "gff-sample", rows, summary, cfg)
    return summary


def cmd_extremes(cfg: dict) -> dict:
    rows, summary = [], {}
    for n, g in _graphs(cfg):
        if resolve_rate(cfg["rate"]) == 1.0:
            m = eval_centering(g.domain.N, "intro-mN")
        else:
            m = eval_centering(n, "retuned-mn")
        r_n = max(1.0, n / 2)
        counts = []
        for r, h in _fields(cfg, n, g):
            pts = extremal_process(h, r_n, centering=m)
            counts.append(len(pts))
            for p in pts:
                rows.append({"n": n, "seed": cfg["seed"], "replica": r, "vertex": list(p.vertex),
                             "position": list(p.position), "depth": p.depth})
        summary[f"n={n:g}"] = {"centering": m, "radius": r_n, "mean_points": float(np.mean(counts))}
    _write(cfg["out"], "extremes", rows, summary, cfg)
    return summary


def _experiment(name: str, cfg: dict, default_replicas: int, options: dict | None = None) -> dict:
    kw = {}
    if cfg["n"]:
        kw["n_grid"] = tuple(cfg["n"])
    opts = dict(options or {})
    if name in ("phase-a", "phase-b-race"):
        opts["walk_rate"] = cfg["rate"]
    ecfg = ex.ExperimentConfig(name, shape=cfg["shape"], rate=cfg["rate"], replicas=cfg["replicas"] or default_replicas,
                               seed=cfg["seed"], out=cfg["out"], format=cfg["format"], options=opts, **kw)
    res = ex.run(ecfg)
    if cfg["out"] is not None:
        ex.persist(res, cfg["out"], ecfg)
    return res.summary


def dispatch(cfg: dict) -> dict:
    cmd = cfg["command"]
    if cmd == "green":
        return cmd_green(cfg)
    if cmd == "gff-sample":
        return cmd_gff_sample(cfg)
    if cmd == "extremes":
        return cmd_extremes(cfg)
    if cmd == "cover":
        return _experiment("cover", cfg, 100)
    if cmd == "phase-a":
        return _experiment("phase-a", cfg, 100)
    if cmd == "phase-b-race":
        return _experiment("phase-b-race", cfg, 200)
    if cmd == "ray-knight":
        return _experiment("isomorphism", cfg, 10000, {"t": cfg["t"] if cfg["t"] is not None else 1.0})
    if cmd == "onedim-laws":
        return _experiment("onedim-laws", cfg, 10000)
    if cmd == "ballot":
        return _experiment("ballot", cfg, 10000)
    if cmd == "race":
        return _experiment("race", cfg, 100000)
    raise UsageError(f"unknown subcommand {cmd!r}")  # pragma: no cover


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("covertime: error: a subcommand is required; see covertime --help", file=sys.stderr)
        return 2
    try:
        cfg = resolve(args)
    except UsageError as err:
        print(f"covertime {args.command}: error: {err}", file=sys.stderr)
        return 2
    _echo(cfg)
    try:
        summary = dispatch(cfg)
    except UsageError as err:
        print(f"covertime {args.command}: error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures become exit 1 with context
        print(f"covertime {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    print(json.dumps({"summary": ex._plain(summary)}, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
