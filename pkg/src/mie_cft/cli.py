"""Experiment runner: layout sweeps, theory curves, simulator runs, dataset comparison.

Datasets are CSV files with the fixed header ``zeta,renyi_n,value,stderr,source,L,delta,g``
plus a JSON manifest written next to them (``<out>.manifest.json``).

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .ed import luttinger_g, mie_exact, xxz_ground_state
from .gaussian import (
    estimate_mie_multi,
    forced_mie,
    layout_regions,
    measured_sites,
    xx_ground_state,
)
from .geometry import RingGeometry, antipodal_layout, clip_zeta
from .theory import TheoryParams, loglog_fit, mie, mie_forced

__all__ = [
    "COLUMNS",
    "SOURCES",
    "ExperimentConfig",
    "ResultRow",
    "UsageError",
    "generate_layout_sweep",
    "run",
    "read_dataset",
    "write_dataset",
    "compare",
    "main",
]

COLUMNS = ("zeta", "renyi_n", "value", "stderr", "source", "L", "delta", "g")
SOURCES = ("theory", "theory_forced", "mc", "ed", "forced_numeric")
MODES = ("theory", "xx_mc", "ed", "forced")
OUTPUT_DIR_ENV = "MIE_CFT_OUTPUT_DIR"
# points below this cross-ratio form the small-zeta tail in comparison reports
TAIL_ZETA = 0.05


class UsageError(ValueError):
    """Invalid configuration or command line."""


# schema

@dataclass(frozen=True)
class ResultRow:
    zeta: float
    renyi_n: float
    value: float
    stderr: float
    source: str
    L: int
    delta: float
    g: float

    def __post_init__(self):
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta!r}")
        if not self.stderr >= 0.0:
            raise ValueError("stderr must be non-negative")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")

    def to_record(self) -> list[str]:
        # repr of a float is the shortest string that round-trips exactly
        return [repr(float(self.zeta)), repr(float(self.renyi_n)), repr(float(self.value)),
                repr(float(self.stderr)), self.source, str(int(self.L)),
                repr(float(self.delta)), repr(float(self.g))]

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        return cls(float(rec["zeta"]), float(rec["renyi_n"]), float(rec["value"]),
                   float(rec["stderr"]), rec["source"], int(rec["L"]),
                   float(rec["delta"]), float(rec["g"]))


def write_dataset(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(row.to_record())


def read_dataset(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow.from_record(rec) for rec in reader]


# configuration

@dataclass
class ExperimentConfig:
    mode: str = "theory"
    L: int = 256
    delta: float = 0.0
    g: float | None = None
    renyi_list: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0])
    zeta_grid: object = field(
        default_factory=lambda: {"zeta_min": 1e-4, "zeta_max": 0.99, "points": 40}
    )
    layout_sweep: dict = field(
        default_factory=lambda: {"min_measured": 4, "max_measured": 120, "step": 8}
    )
    n_traj: int = 4000
    seed: int = 0
    output_path: str = "results.csv"
    units: str = "nats"
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.units not in ("nats", "bits"):
            raise UsageError("units must be 'nats' or 'bits'")
        if not self.renyi_list or any(not float(n) > 0 for n in self.renyi_list):
            raise UsageError("renyi_list must hold positive Renyi indices")
        if not (0 <= int(self.seed) < 2**64):
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise UsageError("threads must be at least 1")
        if self.mode in ("xx_mc", "ed", "forced"):
            if self.L % 2 or self.L < 2:
                raise UsageError("L must be a positive even integer")
            for key in ("min_measured", "max_measured", "step"):
                if key not in self.layout_sweep:
                    raise UsageError(f"layout_sweep needs {key!r}")
        if self.mode == "ed" and self.L > 14:
            raise UsageError("ed mode is limited to L <= 14")
        if self.mode == "xx_mc" and self.n_traj < 2:
            raise UsageError("xx_mc needs n_traj >= 2")
        if self.mode in ("xx_mc", "forced") and self.delta != 0.0:
            raise UsageError(f"mode {self.mode} runs the free-fermion chain; delta must be 0")
        if self.g is None and not (-1.0 < self.delta <= 1.0):
            raise UsageError("delta must lie in (-1, 1] to fix g")
        if self.g is not None and not self.g > 0:
            raise UsageError("g must be positive")

    @property
    def luttinger(self) -> float:
        return float(self.g) if self.g is not None else luttinger_g(self.delta)

    def zetas(self) -> np.ndarray:
        grid = self.zeta_grid
        if isinstance(grid, dict):
            lo, hi, pts = float(grid["zeta_min"]), float(grid["zeta_max"]), int(grid["points"])
            if not (0.0 < lo < hi < 1.0) or pts < 1:
                raise UsageError("zeta_grid needs 0 < zeta_min < zeta_max < 1 and points >= 1")
            return np.geomspace(lo, hi, pts)
        values = np.asarray(grid, dtype=float)
        if values.ndim != 1 or np.any((values <= 0) | (values >= 1)):
            raise UsageError("zeta_grid values must lie in (0, 1)")
        return values

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"_comments"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_CONFIG_COMMENTS = {
    "mode": "theory | xx_mc | ed | forced",
    "L": "ring size (even); xx_mc/forced use the free-fermion engine, ed needs L <= 14",
    "delta": "XXZ anisotropy; sets g = arccos(-delta)/pi unless g is given",
    "g": "Luttinger parameter override for theory curves (null: derive from delta)",
    "renyi_list": "Renyi indices n > 0",
    "zeta_grid": "theory mode: {zeta_min, zeta_max, points} log-spaced, or an explicit list",
    "layout_sweep": "antipodal layouts with |C1| = |C2| from min_measured to max_measured in steps",
    "n_traj": "Born trajectories per layout (xx_mc)",
    "seed": "64-bit seed; trajectory t of layout i uses the stream (seed, i, t)",
    "output_path": "dataset path; relative paths go under $" + OUTPUT_DIR_ENV + " when set",
    "units": "nats | bits",
    "threads": "trajectory worker threads (results do not depend on it)",
}


def default_config_text() -> str:
    data = {"_comments": DEFAULT_CONFIG_COMMENTS}
    data.update(ExperimentConfig().to_dict())
    return json.dumps(data, indent=2)


# layouts

def generate_layout_sweep(L: int, min_measured: int, max_measured: int,
                          step: int = 1) -> list[RingGeometry]:
    """Antipodal symmetric layouts with |C1| = |C2| = m for m = min_measured, ..., max_measured.

    Cross-ratios decrease strictly as the measured regions grow.
    """
    if L % 2:
        raise ValueError("infeasible parity: L must be even for equal antipodal intervals")
    if step < 1 or min_measured < 0 or max_measured < min_measured:
        raise ValueError("need 0 <= min_measured <= max_measured and step >= 1")
    if 2 * max_measured >= L:
        raise ValueError(f"max_measured={max_measured} leaves no room for A and B at L={L}")
    return [antipodal_layout(L, m) for m in range(min_measured, max_measured + 1, step)]


def _layout_zeta(geom: RingGeometry) -> float:
    return clip_zeta(geom.zeta)


# runs

def _theory_rows(zetas, ns, g, L, delta, forced=False):
    rows = []
    for z in zetas:
        for n in ns:
            if forced:
                value = mie_forced(TheoryParams(g, float(n), float(z)))
            else:
                value = mie(float(z), g, float(n))
            rows.append(ResultRow(float(z), float(n), value, 0.0,
                                  "theory_forced" if forced else "theory", L, delta, g))
    return rows


def _sweep(cfg: ExperimentConfig) -> list[RingGeometry]:
    s = cfg.layout_sweep
    return generate_layout_sweep(cfg.L, int(s["min_measured"]), int(s["max_measured"]),
                                 int(s["step"]))


def _run_rows(cfg: ExperimentConfig) -> list[ResultRow]:
    ns = [float(n) for n in cfg.renyi_list]
    if cfg.mode == "theory":
        return _theory_rows(cfg.zetas(), ns, cfg.luttinger, cfg.L, cfg.delta)

    layouts = _sweep(cfg)
    g = cfg.luttinger
    rows = []
    if cfg.mode == "xx_mc":
        C = xx_ground_state(cfg.L)
        for i, geom in enumerate(layouts):
            ests = estimate_mie_multi(cfg.L, geom, ns, cfg.n_traj, (int(cfg.seed), i),
                                      threads=cfg.threads, C=C)
            z = _layout_zeta(geom)
            rows += [ResultRow(z, e.renyi_n, e.mean, e.stderr, "mc", cfg.L, 0.0, g) for e in ests]
    elif cfg.mode == "ed":
        state = xxz_ground_state(cfg.L, cfg.delta)
        for geom in layouts:
            values = mie_exact(cfg.L, geom, cfg.delta, ns, state=state)
            z = _layout_zeta(geom)
            rows += [ResultRow(z, n, float(v), 0.0, "ed", cfg.L, cfg.delta, g)
                     for n, v in zip(ns, values)]
    elif cfg.mode == "forced":
        C = xx_ground_state(cfg.L)
        for geom in layouts:
            z = _layout_zeta(geom)
            regions = layout_regions(geom)
            values = forced_mie(C, measured_sites(geom), regions["A"], ns)
            rows += _theory_rows([z], ns, g, cfg.L, 0.0)
            rows += _theory_rows([z], ns, g, cfg.L, 0.0, forced=True)
            rows += [ResultRow(z, n, float(v), 0.0, "forced_numeric", cfg.L, 0.0, g)
                     for n, v in zip(ns, values)]
    return rows


def _convert_units(rows, units):
    if units == "nats":
        return rows
    ln2 = math.log(2.0)
    return [ResultRow(r.zeta, r.renyi_n, r.value / ln2, r.stderr / ln2, r.source, r.L,
                      r.delta, r.g) for r in rows]


def resolve_output(path) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def run(config: ExperimentConfig) -> Path:
    """Execute ``config`` and write the dataset plus its manifest; returns the dataset path.

    On any failure both files are removed before the exception propagates.
    """
    config.validate()
    out = resolve_output(config.output_path)
    man = manifest_path(out)
    start = time.perf_counter()
    try:
        rows = _convert_units(_run_rows(config), config.units)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_dataset(out, rows)
        manifest = {
            "config": config.to_dict(),
            "seed": int(config.seed),
            "wall_time_s": time.perf_counter() - start,
            "version": __version__,
            "rows": len(rows),
        }
        man.write_text(json.dumps(manifest, indent=2) + "\n")
    except BaseException:
        for p in (out, man):
            p.unlink(missing_ok=True)
        raise
    return out


# comparison

def _interp_theory(theory_rows, zetas):
    zt = np.array([r.zeta for r in theory_rows])
    vt = np.array([r.value for r in theory_rows])
    order = np.argsort(zt)
    zt, vt = zt[order], vt[order]
    lo, hi = zt[0], zt[-1]
    inside = (zetas >= lo * (1 - 1e-12)) & (zetas <= hi * (1 + 1e-12))
    if zt.size == 1:
        return np.where(inside, vt[0], np.nan)
    vals = np.interp(np.log(zetas), np.log(zt), vt)
    return np.where(inside, vals, np.nan)


def _matching_theory_source(source: str) -> str:
    return "theory_forced" if source == "forced_numeric" else "theory"


def _tail_slope(z, v):
    mask = (z < TAIL_ZETA) & (v > 0)
    if mask.sum() < 2:
        return None
    return loglog_fit(z[mask], v[mask])[0]


def compare(theory_rows, numeric_rows) -> dict:
    """Per-point z-scores of numeric rows against theory interpolated in log zeta.

    z = (numeric - theory) / stderr; a zero stderr gives z = 0 on exact agreement
    and +-inf otherwise.  Also reports small-zeta log-log slopes of both curves.
    """
    points, groups = [], []
    numeric_keys = sorted({(r.source, r.renyi_n) for r in numeric_rows})
    for source, n in numeric_keys:
        want = source if source in ("theory", "theory_forced") else _matching_theory_source(source)
        th = [r for r in theory_rows if r.renyi_n == n and r.source == want]
        num = sorted((r for r in numeric_rows if r.renyi_n == n and r.source == source),
                     key=lambda r: r.zeta)
        if not th:
            continue
        z = np.array([r.zeta for r in num])
        v = np.array([r.value for r in num])
        err = np.array([r.stderr for r in num])
        ref = _interp_theory(th, z)
        diff = v - ref
        with np.errstate(divide="ignore", invalid="ignore"):
            zs = np.where(err > 0, diff / np.where(err > 0, err, 1.0),
                          np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
        ok = ~np.isnan(ref)
        for zi, vi, ri, ei, si in zip(z[ok], v[ok], ref[ok], err[ok], zs[ok]):
            points.append({"zeta": float(zi), "renyi_n": n, "source": source, "numeric": float(vi),
                           "theory": float(ri), "stderr": float(ei), "z": float(si)})
        if ok.any():
            tz = np.array([r.zeta for r in th])
            tv = np.array([r.value for r in th])
            groups.append({
                "source": source, "renyi_n": n, "points": int(ok.sum()),
                "max_abs_z": float(np.max(np.abs(zs[ok]))),
                "frac_abs_z_le_2": float(np.mean(np.abs(zs[ok]) <= 2.0)),
                "slope_numeric": _tail_slope(z[ok], v[ok]),
                "slope_theory": _tail_slope(tz, tv),
            })
    if not points:
        raise ValueError("theory and numeric datasets have no overlapping zeta support")
    all_z = np.array([p["z"] for p in points])
    return {
        "points": points,
        "groups": groups,
        "max_abs_z": float(np.max(np.abs(all_z))),
        "frac_abs_z_le_2": float(np.mean(np.abs(all_z) <= 2.0)),
    }


# command line

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output_path")
    p.add_argument("--threads", type=int)
    p.add_argument("--units", choices=("nats", "bits"))
    p.add_argument("--L", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--renyi", type=float, nargs="+", dest="renyi_list")
    p.add_argument("--n-traj", type=int, dest="n_traj")
    p.add_argument("--min-measured", type=int)
    p.add_argument("--max-measured", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--zeta-min", type=float)
    p.add_argument("--zeta-max", type=float)
    p.add_argument("--points", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mie-cft", description=__doc__.splitlines()[0])
    parser.add_argument("--emit-default-config", action="store_true",
                        help="print a commented JSON config template and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("theory", help="closed-form MIE on a zeta grid")
    _add_run_flags(p)
    p = sub.add_parser("simulate", help="lattice MIE over an antipodal layout sweep")
    p.add_argument("--engine", choices=("xx_mc", "ed"), default=None)
    _add_run_flags(p)
    p = sub.add_parser("forced", help="theory, forced theory and Neel post-selected lattice rows")
    _add_run_flags(p)
    p = sub.add_parser("sweep", help="list the layouts of a sweep with their cross-ratios")
    _add_run_flags(p)
    p = sub.add_parser("compare", help="z-scores of a numeric dataset against a theory dataset")
    p.add_argument("theory")
    p.add_argument("numeric")
    p.add_argument("--out", dest="output_path", help="write the JSON summary here")
    return parser


def _config_from_args(args, mode: str) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    data["mode"] = mode
    for key in ("seed", "output_path", "threads", "units", "L", "delta", "g", "renyi_list",
                "n_traj"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    sweep = dict(data.get("layout_sweep") or ExperimentConfig().layout_sweep)
    for key in ("min_measured", "max_measured", "step"):
        value = getattr(args, key, None)
        if value is not None:
            sweep[key] = value
    data["layout_sweep"] = sweep
    grid_flags = {k: getattr(args, k, None) for k in ("zeta_min", "zeta_max", "points")}
    if any(v is not None for v in grid_flags.values()):
        grid = data.get("zeta_grid")
        grid = dict(grid) if isinstance(grid, dict) else dict(ExperimentConfig().zeta_grid)
        grid.update({k: v for k, v in grid_flags.items() if v is not None})
        data["zeta_grid"] = grid
    return ExperimentConfig.from_dict(data)


def _sweep_table(cfg: ExperimentConfig, out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("measured", "A", "x1", "x2", "x3", "x4", "zeta"))
    for geom in _sweep(cfg):
        a, c1, _, _ = geom.lengths
        writer.writerow((int(c1), int(a), repr(geom.x1), repr(geom.x2), repr(geom.x3),
                         repr(geom.x4), repr(_layout_zeta(geom))))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 1 on usage errors (see _Parser) and 0 for --help
        return int(exc.code or 0)
    if args.emit_default_config:
        print(default_config_text())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "compare":
            summary = compare(read_dataset(args.theory), read_dataset(args.numeric))
            text = json.dumps(summary, indent=2)
            if args.output_path:
                resolve_output(args.output_path).write_text(text + "\n")
            else:
                print(text)
            return 0
        if args.command == "simulate":
            mode = args.engine
            if mode is None:
                base = {}
                if args.config:
                    base = json.loads(Path(args.config).read_text())
                mode = base.get("mode", "xx_mc")
                if mode not in ("xx_mc", "ed"):
                    raise UsageError("simulate runs mode xx_mc or ed")
        elif args.command == "sweep":
            mode = "theory"  # the sweep table needs no engine
        else:
            mode = args.command
        cfg = _config_from_args(args, mode)
        if args.command == "sweep":
            _sweep_table(cfg, sys.stdout)
            return 0
        out = run(cfg)
        print(out)
        return 0
    except UsageError as exc:
        print(f"mie-cft: usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any module failure maps to exit code 2
        print(f"mie-cft: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
