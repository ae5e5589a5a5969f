"""Command-line runner for coincidence, correlation and visibility scans.

Configuration is a flat ``key = value`` text file (``#`` starts a comment)
plus ``--set key=value`` overrides.  Results go to a CSV whose rows each
carry the full parameter tuple.  Usage::

    python -m qrelay.cli --config configs/fig4.cfg --out fig4.csv
    python -m qrelay.cli --config configs/fig5.cfg --set steps=4 --workers 4
    python -m qrelay.cli --validate --set N=1 --nmax 2
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import PosteriorUnderflow, coincidence_q, visibility_sweep
from .chain import DEFAULT_TERM_BUDGET, ChainSpec, estimate_terms
from .detector import DetectorModel, Family, loss_to_eta
from .source import SourceParams, TruncationConfig, truncation_error_bound

__all__ = ["RunConfig", "ConfigError", "loss_to_eta", "load_config", "run", "main"]

log = logging.getLogger("qrelay")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4

MODES = ("coincidence", "correlation", "visibility", "validate")
SWEEPABLE = ("delta_tilde", "alpha_tilde", "chi", "eta", "dark", "length_km")
READOUTS = {"singlet": None, "1010": (1, 0, 1, 0), "0101": (0, 1, 0, 1)}

CSV_COLUMNS = [
    "delta_tilde", "Q1010", "Q0101", "Q1001", "Q0110", "Qsum_parallel", "Qsum_crossed", "correlation",
]
VISIBILITY_COLUMNS = ["visibility", "v_max", "v_min", "delta_at_max", "delta_at_min"]


class ConfigError(ValueError):
    pass


class InfeasibleSize(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one scan.

    ``eta`` and ``dark`` apply to the Bell-station detectors; the analyzer
    detectors take ``analyzer_eta`` / ``analyzer_dark`` and fall back to the
    station values when those are negative.  When ``length_km`` > 0 the
    station efficiency is ``eta0 * 10^(-alpha_db * length_km / 10)`` instead
    of ``eta``.
    """

    mode: str = "coincidence"
    N: int = 2
    n_max: int = 1
    chi: float = 0.24
    eta: float = 1.0
    dark: float = 0.0
    eta0: float = 1.0
    alpha_db: float = 0.2
    length_km: float = 0.0
    station_family: str = "threshold"
    analyzer_family: str = "pnr"
    analyzer_eta: float = -1.0
    analyzer_dark: float = -1.0
    readouts: str = "singlet"
    alpha_tilde: float = 0.0
    delta_tilde: float = 0.0
    sweep: str = "delta_tilde"
    start: float = 0.0
    stop: float = 2 * math.pi
    steps: int = 64
    endpoint: bool = False
    delta_points: int = 64
    workers: int = 1
    out: str = "qrelay.csv"
    term_budget: float = DEFAULT_TERM_BUDGET
    validate_tol: float = 1e-9

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.N < 1 or self.N & (self.N - 1):
            raise ConfigError(f"N must be a power of two, got {self.N}")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.sweep not in SWEEPABLE:
            raise ConfigError(f"sweep must be one of {SWEEPABLE}, got {self.sweep!r}")
        if self.mode == "visibility" and self.sweep == "delta_tilde" and self.steps > 1:
            raise ConfigError("visibility mode sweeps delta_tilde itself; choose another sweep axis")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("sweep bounds must be finite")
        if self.steps < 1 or (self.steps < 2 and self.start != self.stop):
            raise ConfigError("steps must be >= 2 for a sweep")
        if self.delta_points < 8:
            raise ConfigError("delta_points must be >= 8")
        if self.readouts not in READOUTS:
            raise ConfigError(f"readouts must be one of {tuple(READOUTS)}")
        for fam in (self.station_family, self.analyzer_family):
            if fam not in (f.value for f in Family):
                raise ConfigError(f"unknown detector family {fam!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 < self.eta <= 1 or not 0 <= self.dark < 1:
            raise ConfigError("need 0 < eta <= 1 and 0 <= dark < 1")
        if self.chi < 0:
            raise ConfigError("chi must be >= 0")

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: "RunConfig | None" = None) -> "RunConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        values = dataclasses.asdict(base) if base is not None else {}
        for key, raw in pairs.items():
            if key not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, kinds[key], raw)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_pairs(parse_pairs(text.splitlines()), base)

    # -- derived objects -------------------------------------------------

    def station_eta(self) -> float:
        if self.length_km > 0:
            return loss_to_eta(self.eta0, self.alpha_db, self.length_km)
        return self.eta

    def chain_spec(self) -> ChainSpec:
        det = DetectorModel(Family(self.station_family), self.station_eta(), self.dark)
        return ChainSpec(
            N=self.N,
            source=SourceParams(self.chi),
            trunc=TruncationConfig(self.n_max),
            bell_detectors=det,
        )

    def analyzer_detectors(self) -> DetectorModel:
        eta = self.station_eta() if self.analyzer_eta < 0 else self.analyzer_eta
        dark = self.dark if self.analyzer_dark < 0 else self.analyzer_dark
        return DetectorModel(Family(self.analyzer_family), eta, dark)

    def grid(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.stop, self.steps, endpoint=self.endpoint)

    def at(self, value: float) -> "RunConfig":
        return dataclasses.replace(self, **{self.sweep: float(value)})


def _coerce(key: str, kind, raw: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(_eval_number(raw))
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw.strip("'\"")
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _eval_number(raw: str) -> float:
    """Float literal, optionally a multiple of pi such as ``pi/2`` or ``1.5*pi``."""
    s = raw.replace(" ", "").lower()
    if "pi" not in s:
        return float(s)
    num, _, den = s.partition("/")
    coef = num.replace("*pi", "").replace("pi", "") or "1"
    coef = "-1" if coef == "-" else coef
    value = float(coef) * math.pi
    return value / float(den) if den else value


def parse_pairs(lines) -> dict[str, str]:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str | os.PathLike | None, overrides: list[str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = RunConfig.from_text(text)
    if overrides:
        pairs = parse_pairs(overrides)
        cfg = RunConfig.from_pairs(pairs, cfg)
    return cfg


# ---------------------------------------------------------------------------
# evaluation


def _param_columns(cfg: RunConfig) -> dict:
    return {
        "N": cfg.N,
        "n_max": cfg.n_max,
        "chi": cfg.chi,
        "eta": cfg.station_eta(),
        "dark": cfg.dark,
        "station_family": cfg.station_family,
        "analyzer_family": cfg.analyzer_family,
        "analyzer_eta": cfg.analyzer_detectors().eta,
        "analyzer_dark": cfg.analyzer_detectors().dark,
        "length_km": cfg.length_km,
        "readouts": cfg.readouts,
        "alpha_tilde": cfg.alpha_tilde,
    }


def evaluate_point(cfg: RunConfig) -> dict:
    """One grid point; returns one CSV row."""
    spec = cfg.chain_spec()
    readouts = READOUTS[cfg.readouts]
    if cfg.mode == "visibility":
        grid = np.linspace(0, 2 * math.pi, cfg.delta_points, endpoint=False)
        res = visibility_sweep(spec, cfg.alpha_tilde, grid, cfg.analyzer_detectors(), readouts)
        best = res.rows[int(np.argmax(res.parallel))]
        row = best.as_row()
        row.update(
            visibility=res.visibility, v_max=res.v_max, v_min=res.v_min,
            delta_at_max=res.delta_at_max, delta_at_min=res.delta_at_min,
        )
    else:
        res = coincidence_q(readouts, (cfg.alpha_tilde, cfg.delta_tilde), cfg.analyzer_detectors(), spec)
        row = res.as_row()
    row.update(_param_columns(cfg))
    return row


def _columns(cfg: RunConfig) -> list[str]:
    extra = VISIBILITY_COLUMNS if cfg.mode == "visibility" else []
    return CSV_COLUMNS + extra + list(_param_columns(cfg))


def check_feasible(cfg: RunConfig) -> dict:
    """Cost summary; raises InfeasibleSize beyond the term budget.

    The production path contracts dense blocks whose cost grows like
    (2 n_max + 1)^8 per station and readout combination; the term count is
    what explicit enumeration would need.
    """
    terms = estimate_terms(cfg.N, cfg.n_max)
    dim = 2 * cfg.n_max + 1
    combos = 2 ** (2 * cfg.N - 1) if cfg.readouts == "singlet" else 1
    block_ops = combos * (2 * cfg.N - 1) * dim**8
    info = {"enumeration_terms": terms, "block_ops": block_ops, "grid_points": len(cfg.grid())}
    if block_ops > cfg.term_budget * 100:
        raise InfeasibleSize(f"block contraction needs ~{block_ops:.3g} operations per point")
    return info


def _checkpoint_path(out: Path) -> Path:
    return out.with_name(out.name + ".ckpt")


def _load_checkpoint(path: Path, cfg_text: str) -> dict[int, dict]:
    if not path.exists():
        return {}
    done = {}
    with path.open() as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("config") != cfg_text:
            log.warning("checkpoint %s belongs to a different config; ignoring it", path)
            return {}
        for line in fh:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line from an interrupted write
            done[rec["index"]] = rec["row"]
    return done


def run(cfg: RunConfig, out: str | os.PathLike | None = None) -> int:
    """Execute a config; returns the process exit status."""
    t0 = time.perf_counter()
    out_path = Path(out or cfg.out)
    if cfg.mode == "validate":
        return run_validation(cfg)
    try:
        info = check_feasible(cfg)
    except InfeasibleSize as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    grid = cfg.grid()
    points = [cfg.at(v) for v in grid]
    cfg_text = cfg.to_text()
    ckpt = _checkpoint_path(out_path)
    done = _load_checkpoint(ckpt, cfg_text)
    todo = [i for i in range(len(points)) if i not in done]
    if done:
        log.info("resuming: %d of %d points already done", len(done), len(points))
    try:
        with ckpt.open("a" if done else "w") as fh:
            if not done:
                fh.write(json.dumps({"config": cfg_text}) + "\n")
            for i, row in _evaluate_all(points, todo, cfg.workers):
                done[i] = row
                fh.write(json.dumps({"index": i, "row": row}) + "\n")
                fh.flush()
    except PosteriorUnderflow as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MemoryError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    rows = [done[i] for i in range(len(points))]
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_columns(cfg), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    ckpt.unlink(missing_ok=True)
    _print_summary(cfg, rows, info, time.perf_counter() - t0, out_path)
    return EXIT_OK


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _evaluate_all(points, todo, workers):
    """Yield ``(index, row)`` in index order whatever the worker count."""
    if workers == 1 or len(todo) <= 1:
        for i in todo:
            yield i, evaluate_point(points[i])
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for i, row in zip(todo, pool.map(evaluate_point, [points[i] for i in todo])):
            yield i, row


def _print_summary(cfg, rows, info, wall, out_path):
    print(f"wrote {len(rows)} rows to {out_path}")
    if cfg.mode == "visibility":
        for r in rows:
            print(f"  {cfg.sweep}={r.get(cfg.sweep, r.get('chi')):.6g}  V={r['visibility']:.4f}")
    elif len(rows) > 2:
        par = np.array([r["Qsum_parallel"] for r in rows])
        hi, lo = par.max(), par.min()
        vis = (hi - lo) / (hi + lo) if hi + lo > 0 else float("nan")
        print(f"  grid visibility of Q1010+Q0101 along {cfg.sweep}: {vis:.4f}")
        print(f"  max at {cfg.sweep}={rows[int(par.argmax())][cfg.sweep]:.6g}, "
              f"min at {cfg.sweep}={rows[int(par.argmin())][cfg.sweep]:.6g}")
    print(f"  truncation tail (tanh chi)^(n_max+1): {truncation_error_bound(cfg.chi, cfg.n_max):.3g}")
    print(f"  enumeration terms per readout: {info['enumeration_terms']}")
    print(f"  wall time: {wall:.2f} s")


def run_validation(cfg: RunConfig) -> int:
    """Compare the closed form against the brute-force oracle on a few angles."""
    from .oracle import oracle_coincidence

    spec = cfg.chain_spec()
    readouts = READOUTS[cfg.readouts]
    dets = cfg.analyzer_detectors()
    worst = 0.0
    angles = [(cfg.alpha_tilde, d) for d in np.linspace(0, math.pi, 4)]
    print(f"validate N={cfg.N} n_max={cfg.n_max} chi={cfg.chi} eta={cfg.station_eta():.4g} dark={cfg.dark:g}")
    try:
        for a in angles:
            q = coincidence_q(readouts, a, dets, spec)
            o = oracle_coincidence(spec, readouts, a, dets)
            for name in ("Q1010", "Q0101", "Q1001", "Q0110"):
                x, y = getattr(q, name), getattr(o, name)
                rel = abs(x - y) / max(abs(y), 1e-300)
                worst = max(worst, rel)
            print(f"  delta={a[1]:.4f}  Q1010 closed={q.Q1010:.12e} oracle={o.Q1010:.12e}")
    except MemoryError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ok = worst <= cfg.validate_tol
    print(f"  worst relative difference {worst:.3e}  ({'ok' if ok else 'FAILED'})")
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrelay", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--validate", action="store_true", help="oracle vs closed-form check, then exit")
    p.add_argument("--nmax", type=int, help="photon-number truncation per mode")
    p.add_argument("--estimate", action="store_true", help="print cost estimates and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = list(args.set)
    for flag, key in ((args.mode, "mode"), (args.workers, "workers"), (args.out, "out"), (args.nmax, "n_max")):
        if flag is not None:
            overrides.append(f"{key}={flag}")
    if args.validate:
        overrides.append("mode=validate")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.estimate:
        try:
            info = check_feasible(cfg)
        except InfeasibleSize as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        for k, v in info.items():
            print(f"{k}: {v}")
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
