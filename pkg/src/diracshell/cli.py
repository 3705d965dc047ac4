"""Command-line front end.

Verbs: ``verify``, ``spectrum``, ``critical``, ``resolvent``, ``mesh-info``.
Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 numerical refusal.

Configuration is an INI file (``key = value`` inside sections, see
``docs/config.md``); command-line flags override file values.  Every run
writes into ``<out>/<verb>-<hash12>/`` where ``hash12`` is the first twelve
hex digits of the SHA-256 of the canonical JSON of the resolved
configuration.  Each output file carries that hash and the package version;
no timestamps or timings are written, so in deterministic mode two runs with
the same configuration produce byte-identical files.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


def _early_deterministic(argv) -> bool:
    """Look for ``--deterministic`` (flag or config file) before numpy is imported."""
    if "--deterministic" in argv:
        return True
    for i, a in enumerate(argv):
        path = None
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
        if path and os.path.isfile(path):
            cp = configparser.ConfigParser()
            try:
                cp.read(path)
                return cp.getboolean("run", "deterministic", fallback=False)
            except (configparser.Error, ValueError):
                return False
    return False


if _early_deterministic(sys.argv[1:]) and "numpy" not in sys.modules:
    for _v in _THREAD_VARS:
        os.environ[_v] = "1"

import csv  # noqa: E402
import hashlib  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
from dataclasses import asdict, dataclass, field, fields  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402

log = logging.getLogger("diracshell")

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_REFUSAL = 0, 1, 2, 3
SUITE_NAMES = ("algebra", "kernel", "layer", "critical", "singular")


class ConfigError(ValueError):
    """Invalid run configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _floats(text, n=None, name="value"):
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{name}: expected {n} numbers, got {len(vals)}")
    return tuple(vals)


def parse_levels(text) -> tuple[int, ...]:
    """``"1,2,3"`` or ``"1-3"``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    s = str(text).strip()
    try:
        if "-" in s and "," not in s:
            a, b = s.split("-")
            return tuple(range(int(a), int(b) + 1))
        return tuple(int(v) for v in s.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"levels: expected '1,2,3' or '1-3', got {text!r}") from None


def parse_grid(text) -> tuple[float, float, int]:
    """``"lo:hi:n"`` in units of m."""
    if isinstance(text, (list, tuple)):
        lo, hi, n = text
    else:
        parts = str(text).split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid: expected 'lo:hi:n', got {text!r}")
        lo, hi, n = parts
    try:
        return float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid: expected 'lo:hi:n', got {text!r}") from None


def parse_points(text) -> tuple[tuple[float, float, float], ...]:
    """``"x,y,z; x,y,z"``."""
    if isinstance(text, (list, tuple)):
        return tuple(tuple(float(c) for c in p) for p in text)
    return tuple(_floats(p, 3, "probes") for p in str(text).split(";") if p.strip())


@dataclass
class RunConfig:
    # [surface]
    surface: str = "sphere"
    R: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    h: float = 0.3
    delta: float = 0.2
    n: int = 4
    # [physics]
    m: float = 1.0
    eta: float | None = 1.0
    sign: int | None = None
    lam: float = 0.0
    # [scan]
    grid: tuple = (-0.95, 0.95, 200)
    levels: tuple = (1, 2, 3)
    scheme: str = "polar"
    K: int = 12
    match_tol: float = 1e-3
    # [threshold]
    tau_calibrate: bool = True
    tau: float | None = None
    tau_factor: float = 10.0
    # [resolvent]
    source_center: tuple = (0.2, -0.1, 0.15)
    source_width: float = 0.15
    source_zeta: tuple = (1.0, 0.0, 0.5, 0.0)
    probes: tuple = ((0.3, 0.2, -0.1),)
    upsample: int = 4
    fd_steps: tuple = (0.04, 0.02, 0.01)
    # [run]
    seed: int = 0
    out: str = "out"
    deterministic: bool = False

    def validate(self) -> "RunConfig":
        """Field-level checks; raises ConfigError naming the first bad field."""
        from .surface import KINDS, SurfaceSpec

        if self.surface not in KINDS:
            raise ConfigError(f"surface: must be one of {KINDS}, got {self.surface!r}")
        try:
            SurfaceSpec(self.surface, self.R, self.a, self.b, self.c, self.h, self.delta, self.n)
        except ValueError as e:
            raise ConfigError(f"surface: {e}") from None
        if not (np.isfinite(self.m) and self.m > 0):
            raise ConfigError(f"m: must be positive, got {self.m!r}")
        if self.sign is not None and self.sign not in (1, -1):
            raise ConfigError(f"sign: must be +1 or -1, got {self.sign!r}")
        if self.eta is not None:
            if not np.isfinite(self.eta):
                raise ConfigError(f"eta: must be finite, got {self.eta!r}")
            if self.eta == 0.0:
                raise ConfigError("eta: eta = 0 is the free operator A_0 (no shell interaction); "
                                  "choose a nonzero strength")
        if not (-self.m < self.lam < self.m):
            raise ConfigError(f"lam: must lie in the gap (-m, m), got {self.lam!r}")
        lo, hi, ng = self.grid
        if not (-1.0 < lo < hi < 1.0) or ng < 2:
            raise ConfigError(f"grid: need -1 < lo < hi < 1 (units of m) and n >= 2, got {self.grid!r}")
        if not self.levels or any(lv < 0 or lv > 5 for lv in self.levels):
            raise ConfigError(f"levels: need a nonempty list of integers in [0, 5], got {self.levels!r}")
        if list(self.levels) != sorted(set(self.levels)):
            raise ConfigError(f"levels: must be strictly increasing, got {self.levels!r}")
        if self.scheme not in ("polar", "disk"):
            raise ConfigError(f"scheme: must be 'polar' or 'disk', got {self.scheme!r}")
        if self.K < 1:
            raise ConfigError(f"K: must be at least 1, got {self.K!r}")
        if not self.match_tol > 0:
            raise ConfigError("match_tol: must be positive")
        if not self.tau_calibrate and not (self.tau is not None and self.tau > 0):
            raise ConfigError("tau: a positive value is required when tau_calibrate = false")
        if not self.tau_factor > 0:
            raise ConfigError("tau_factor: must be positive")
        if len(self.source_center) != 3 or len(self.source_zeta) != 4:
            raise ConfigError("source_center needs 3 numbers and source_zeta 4")
        if not self.source_width > 0:
            raise ConfigError("source_width: must be positive")
        if not self.probes:
            raise ConfigError("probes: at least one probe point is required")
        if self.upsample < 1:
            raise ConfigError("upsample: must be >= 1")
        if len(self.fd_steps) < 2 or any(s <= 0 for s in self.fd_steps):
            raise ConfigError("fd_steps: need at least two positive steps")
        if self.seed < 0:
            raise ConfigError("seed: must be nonnegative")
        return self

    # -- derived objects ----------------------------------------------------
    def surface_spec(self):
        from .surface import SurfaceSpec

        return SurfaceSpec(self.surface, self.R, self.a, self.b, self.c, self.h, self.delta, self.n)

    def lam_grid(self) -> np.ndarray:
        lo, hi, ng = self.grid
        return np.linspace(lo * self.m, hi * self.m, int(ng))

    def canonical(self) -> dict:
        """Everything that influences results (the output directory does not)."""
        d = asdict(self)
        d.pop("out")
        return json.loads(json.dumps(d))

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# INI layout: section -> {key: (field, parser)}
_INI = {
    "surface": {"kind": ("surface", str), "R": ("R", float), "a": ("a", float), "b": ("b", float),
                "c": ("c", float), "h": ("h", float), "delta": ("delta", float), "n": ("n", int)},
    "physics": {"m": ("m", float), "eta": ("eta", float), "sign": ("sign", int), "lambda": ("lam", float)},
    "scan": {"grid": ("grid", parse_grid), "levels": ("levels", parse_levels), "scheme": ("scheme", str),
             "K": ("K", int), "match_tol": ("match_tol", float)},
    "threshold": {"calibrate": ("tau_calibrate", "bool"), "tau": ("tau", float),
                  "factor": ("tau_factor", float)},
    "resolvent": {"center": ("source_center", lambda s: _floats(s, 3, "center")),
                  "width": ("source_width", float),
                  "zeta": ("source_zeta", lambda s: _floats(s, 4, "zeta")),
                  "probes": ("probes", parse_points), "upsample": ("upsample", int),
                  "fd_steps": ("fd_steps", lambda s: _floats(s, None, "fd_steps"))},
    "run": {"seed": ("seed", int), "out": ("out", str), "deterministic": ("deterministic", "bool")},
}


def read_config_file(path) -> dict:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep key case (R vs r)
    try:
        if not cp.read(path):
            raise ConfigError(f"config: cannot read {path}")
    except configparser.Error as e:
        raise ConfigError(f"config: {e}") from None
    vals = {}
    for sec in cp.sections():
        if sec not in _INI:
            raise ConfigError(f"config: unknown section [{sec}]; known: {sorted(_INI)}")
        for key, raw in cp.items(sec):
            if key not in _INI[sec]:
                raise ConfigError(f"config: unknown key {key!r} in [{sec}]; known: {sorted(_INI[sec])}")
            name, parser = _INI[sec][key]
            try:
                if raw.strip().lower() in ("none", ""):
                    vals[name] = None
                elif parser == "bool":
                    vals[name] = cp.getboolean(sec, key)
                else:
                    vals[name] = parser(raw)
            except ConfigError:
                raise
            except ValueError:
                raise ConfigError(f"config: [{sec}] {key} = {raw!r} is not valid") from None
    return vals


def build_config(args) -> RunConfig:
    vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    if vals.get("sign") is not None and "eta" not in vals:
        vals["eta"] = None
    over = {
        "surface": args.surface,
        "levels": parse_levels(args.levels) if args.levels else None,
        "grid": parse_grid(args.grid) if args.grid else None,
        "out": args.out, "seed": args.seed,
        "lam": getattr(args, "lam", None),
    }
    if args.eta is not None:
        over["eta"] = args.eta
        vals["sign"] = None
    if args.sign is not None:
        over["sign"] = args.sign
        if args.eta is None:
            vals["eta"] = None
    if args.deterministic:
        over["deterministic"] = True
    vals.update({k: v for k, v in over.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in vals.items() if k in known})
    if cfg.eta is not None and cfg.sign is not None:
        raise ConfigError("eta and sign are mutually exclusive (sign selects eta = 2 sign)")
    return cfg.validate()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

class RunWriter:
    """Writes result files into one run directory and records their schema."""

    def __init__(self, cfg: RunConfig, verb: str):
        self.cfg, self.verb = cfg, verb
        self.hash = cfg.hash()
        self.dir = Path(cfg.out) / f"{verb}-{self.hash[:12]}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.schema: dict = {}

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.hash, "version": __version__, "verb": self.verb}

    def json(self, name: str, doc: dict, description: str = ""):
        body = dict(self.stamp)
        body.update(doc)
        (self.dir / name).write_text(json.dumps(_plain(body), indent=2, sort_keys=True) + "\n")
        self.schema[name] = {"format": "json", "description": description}

    def csv(self, name: str, columns: list[tuple[str, str]], rows, description: str = ""):
        buf = io.StringIO()
        buf.write(f"# diracshell {__version__} config_hash={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c for c, _ in columns])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        (self.dir / name).write_text(buf.getvalue())
        self.schema[name] = {"format": "csv", "comment_prefix": "#", "description": description,
                             "columns": [{"name": c, "description": d} for c, d in columns]}

    def finish(self):
        self.json("config.json", {"config": self.cfg.canonical()}, "resolved run configuration")
        doc = dict(self.stamp)
        doc["files"] = self.schema
        (self.dir / "schema.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def _plain(o):
    """JSON-safe copy with floats rounded to 12 significant digits."""
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if not np.isfinite(f) else float(f"{f:.12g}")
    if isinstance(o, complex):
        return {"re": _plain(o.real), "im": _plain(o.imag)}
    if o is None or isinstance(o, str):
        return o
    return str(o)


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def _tau(cfg, mesh):
    from .bs import threshold

    if not cfg.tau_calibrate:
        return float(cfg.tau)
    return threshold(mesh, m=cfg.m, factor=cfg.tau_factor, scheme=cfg.scheme)


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    from .suites import run_suite

    kw = {}
    if suite in ("layer", "critical"):
        kw = {"levels": cfg.levels, "m": cfg.m}
    elif suite in ("algebra", "kernel", "singular"):
        kw = {"seed": cfg.seed}
    rep = run_suite(suite, **kw)
    runtime = rep.pop("runtime_s")
    wr = RunWriter(cfg, f"verify-{suite}")
    wr.json("report.json", rep, f"checks of the {suite} suite")
    wr.finish()
    for c in rep["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {suite}.{c['name']}: {c['value']}")
    print(f"{suite}: {'passed' if rep['passed'] else 'FAILED'} in {runtime:.2f} s -> {wr.dir}")
    return EXIT_OK if rep["passed"] else EXIT_INVARIANT


_SCAN_COLS = [("level", "refinement level"), ("N", "number of panels"),
              ("lambda", "spectral parameter"), ("s_min", "smallest singular value of the BS matrix"),
              ("eta", "shell strength"), ("tau", "numerical-zero threshold")]
_ROOT_COLS = [("level", "refinement level"), ("lambda", "root"), ("multiplicity", "clustered crossing count"),
              ("s_min", "s_min at the root"), ("near_zero", "singular values below 3 tau"),
              ("kind", "crossing or minimum"), ("unresolved_fraction", "null-vector energy outside the band"),
              ("resolved", "1 if unresolved_fraction < 0.5")]


def cmd_spectrum(cfg: RunConfig) -> int:
    from .bs import critical_scan, scan_gap
    from .critical import near_kernel_count
    from .radial import merge_roots, oracle_spectrum, oracle_to_json
    from .surface import build_mesh

    spec = cfg.surface_spec()
    grid = cfg.lam_grid()
    wr = RunWriter(cfg, "spectrum")
    scan_rows, root_rows, results, counts = [], [], {}, []
    for lv in cfg.levels:
        mesh = build_mesh(spec, lv)
        tau = _tau(cfg, mesh)
        if cfg.sign is not None:
            res = critical_scan(cfg.sign, mesh, grid, m=cfg.m, scheme=cfg.scheme, tau=tau)
            counts.append((lv, mesh.N, cfg.sign, near_kernel_count(cfg.sign, mesh, tau, m=cfg.m,
                                                                   scheme=cfg.scheme), tau))
        else:
            res = scan_gap(cfg.eta, mesh, grid, m=cfg.m, scheme=cfg.scheme, tau=tau)
        results[lv] = res
        scan_rows += [(lv, mesh.N, x, s, res.eta, tau) for x, s in res.samples]
        for r in res.eigenvalues + res.unresolved:
            root_rows.append((lv, r.lam, r.multiplicity, r.smin, r.near_zero, r.kind,
                              r.unresolved_fraction, r.resolved))
        print(f"level {lv} (N={mesh.N}): roots {[round(r.lam, 8) for r in res.eigenvalues]}"
              f" unresolved {len(res.unresolved)}")
    wr.csv("scan.csv", _SCAN_COLS, scan_rows, "s_min over the lambda grid, long format")
    root_rows.sort(key=lambda r: (r[0], r[1]))
    wr.csv("roots.csv", _ROOT_COLS, root_rows, "refined roots per level")
    wr.json("eigenvalues.json", {"levels": {str(lv): r.to_dict() for lv, r in results.items()}},
            "gap eigenvalues per level")
    status = EXIT_OK
    if counts:
        wr.csv("near_kernel.csv", [("level", "refinement level"), ("N", "number of panels"),
                                   ("sign", "critical sign"), ("count", "singular values below tau at lambda=0"),
                                   ("tau", "threshold")], counts, "near-kernel counts of I + 2 sign D(0)")
        for lv, N, s, c, _ in counts:
            print(f"level {lv} (N={N}): near-kernel count of I{'+' if s > 0 else '-'}2D(0) = {c}")
    if spec.kind == "sphere" and cfg.sign is None:
        lo, hi = grid[0], grid[-1]
        edge = 1.0 - max(abs(lo), abs(hi)) / cfg.m
        orc = oracle_spectrum(spec.R, cfg.m, cfg.eta, cfg.K, edge=min(edge, 1e-3))
        wr.json("oracle.json", json.loads(oracle_to_json(orc, R=spec.R, m=cfg.m, eta=cfg.eta, K=cfg.K)),
                "radial oracle roots per spin-orbit sector")
        merged = [(x, d) for x, d in merge_roots(orc) if lo <= x <= hi]
        fin = results[cfg.levels[-1]]
        bem = [(r.lam, r.multiplicity) for r in fin.eigenvalues]
        rows, worst, ok = [], 0.0, True
        used = set()
        for x, d in merged:
            j = int(np.argmin([abs(b - x) for b, _ in bem])) if bem else -1
            err = abs(bem[j][0] - x) if j >= 0 else float("inf")
            mult = bem[j][1] if j >= 0 else 0
            match = err <= cfg.match_tol * cfg.m and abs(mult - d) <= 1
            if match:
                used.add(j)
            ok &= match
            worst = max(worst, err)
            rows.append((cfg.levels[-1], x, d, bem[j][0] if j >= 0 else "", mult, err, match))
        spurious = [bem[j] for j in range(len(bem)) if j not in used]
        ok &= not spurious
        wr.csv("oracle_comparison.csv",
               [("level", "finest level"), ("lambda_oracle", "radial oracle root"),
                ("degeneracy", "angular degeneracy (sum over coincident sectors)"),
                ("lambda_bem", "nearest boundary-element root"), ("multiplicity", "its multiplicity"),
                ("abs_error", "|lambda_bem - lambda_oracle|"), ("matched", "1 if within tolerance")],
               rows, "oracle versus boundary-element roots inside the grid window")
        print(f"max |lambda_BEM - lambda_oracle| = {worst:.3e} over {len(merged)} oracle roots;"
              f" spurious: {len(spurious)}")
        if not ok:
            status = EXIT_INVARIANT
    wr.finish()
    print(f"-> {wr.dir}")
    return status


def cmd_critical(cfg: RunConfig) -> int:
    from .critical import (compactness_profile, factorization_residual, flat_smoothing_test,
                           near_kernel_count, profiles_to_csv)
    from .surface import build_mesh

    spec = cfg.surface_spec()
    wr = RunWriter(cfg, "critical")
    signs = (cfg.sign,) if cfg.sign is not None else (1, -1)
    rows, profiles, summary = [], [], []
    for lv in cfg.levels:
        mesh = build_mesh(spec, lv)
        tau = _tau(cfg, mesh)
        cnt = {s: near_kernel_count(s, mesh, tau, m=cfg.m, scheme=cfg.scheme) for s in signs}
        prof = compactness_profile(0.0, mesh, m=cfg.m, scheme=cfg.scheme)
        profiles.append(prof)
        fac = factorization_residual(mesh, cfg.m, scheme=cfg.scheme)
        sm = flat_smoothing_test(mesh, seed=cfg.seed, m=cfg.m)
        for s in signs:
            rows.append((lv, mesh.N, s, cnt[s], tau))
        summary.append({"level": lv, "N": mesh.N, "tau": tau, "counts": {str(s): c for s, c in cnt.items()},
                        "tail_ratio": prof.tail_ratio(), "factorization": fac,
                        "smoothing_ratio": sm.ratio, "smoothing_skipped": sm.skipped})
        print(f"level {lv} (N={mesh.N}): counts {cnt}, tail ratio {prof.tail_ratio():.4g},"
              f" factorization {fac:.4g}")
    wr.csv("near_kernel.csv", [("level", "refinement level"), ("N", "number of panels"),
                               ("sign", "critical sign"), ("count", "singular values of I + 2 sign D(0) below tau"),
                               ("tau", "threshold")], rows, "near-kernel counts per level")
    text = profiles_to_csv(profiles)
    prow = [line.split(",") for line in text.strip().split("\n")[1:]]
    wr.csv("decay_profile.csv", [("index", "1-based singular value index"),
                                 ("singular_value", "singular value of D(0)^2 - 1/4"),
                                 ("level", "refinement level"), ("tag", "operator"), ("N", "number of panels")],
           prow, "decay profiles, long format")
    wr.json("critical.json", {"surface_id": spec.surface_id, "levels": summary}, "per-level diagnostics")
    wr.finish()
    print(f"-> {wr.dir}")
    return EXIT_OK


def cmd_resolvent(cfg: RunConfig) -> int:
    from .bs import GaussianSource, fd_pde_residual, krein_jump_residual, krein_resolvent_apply
    from .surface import build_mesh

    eta = cfg.eta if cfg.eta is not None else 2.0 * cfg.sign
    spec = cfg.surface_spec()
    src = GaussianSource(tuple(cfg.source_center), cfg.source_width, tuple(cfg.source_zeta))
    probes = np.array(cfg.probes, dtype=float)
    wr = RunWriter(cfg, "resolvent")
    frows, rrows, jumps = [], [], []
    for lv in cfg.levels:
        mesh = build_mesh(spec, lv)
        tau = _tau(cfg, mesh)
        res = krein_resolvent_apply(eta, cfg.lam, src, mesh, probes, m=cfg.m, tau=tau,
                                    upsample=cfg.upsample, scheme=cfg.scheme)
        for i, (p, u) in enumerate(zip(probes, res.values)):
            for k in range(4):
                frows.append((lv, i, *p, k, u[k].real, u[k].imag))
        jr = krein_jump_residual(res)["residual"] if not src.is_zero else 0.0
        jumps.append(jr)
        for i, p in enumerate(probes):
            for hstep in cfg.fd_steps:
                pde = fd_pde_residual(res, src, p, hstep)
                rrows.append((lv, mesh.N, i, hstep, pde, jr, res.smin, tau))
        print(f"level {lv} (N={mesh.N}): jump residual {jr:.4g}, s_min {res.smin:.4g} ({res.meta['form']})")
    wr.csv("field.csv", [("level", "refinement level"), ("probe", "probe index"), ("x", "x"), ("y", "y"),
                         ("z", "z"), ("component", "spinor component 0..3"), ("re", "real part"),
                         ("im", "imaginary part")], frows, "resolvent values at the probes")
    wr.csv("residuals.csv", [("level", "refinement level"), ("N", "number of panels"),
                             ("probe", "probe index"), ("h", "finite-difference step"),
                             ("pde_residual", "|(A_0 - lambda) u - g| by central differences"),
                             ("jump_residual", "relative weighted residual of the jump condition"),
                             ("s_min", "smallest singular value of the BS matrix"), ("tau", "threshold")],
           rrows, "PDE and jump-condition residuals")
    wr.finish()
    print(f"-> {wr.dir}")
    if len(jumps) > 1 and not src.is_zero and not all(b < a for a, b in zip(jumps[:-1], jumps[1:])):
        print("jump residual does not decrease across levels")
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_mesh_info(cfg: RunConfig) -> int:
    from .surface import build_mesh, mesh_diagnostics

    spec = cfg.surface_spec()
    wr = RunWriter(cfg, "mesh-info")
    reports = []
    for lv in cfg.levels:
        rep = mesh_diagnostics(build_mesh(spec, lv))
        rep.pop("area_table", None)
        reports.append(rep)
        print(f"level {lv}: N={rep['N']} area={rep['area']:.12g} weights [{rep['min_weight']:.3g},"
              f" {rep['max_weight']:.3g}]")
    table = mesh_diagnostics(build_mesh(spec, cfg.levels[-1]))
    wr.csv("area.csv", [("level", "refinement level"), ("area", "sum of weights"),
                        ("error", "|area - exact|"), ("ratio", "error ratio to the previous level")],
           [(r["level"], r["area"], r["error"], r.get("ratio", "")) for r in table["area_table"]],
           "area convergence")
    wr.json("mesh_info.json", {"surface": spec.to_dict(), "levels": reports}, "mesh diagnostics per level")
    wr.finish()
    print(f"-> {wr.dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI configuration file")
    common.add_argument("--surface", choices=("sphere", "ellipsoid", "coin"))
    common.add_argument("--eta", type=float, help="shell strength (nonzero)")
    common.add_argument("--sign", type=int, choices=(1, -1), help="critical sign: eta = 2 sign")
    common.add_argument("--levels", help="'1,2,3' or '1-3'")
    common.add_argument("--grid", help="lambda grid 'lo:hi:n' in units of m")
    common.add_argument("--lambda", dest="lam", type=float, help="spectral parameter for resolvent")
    common.add_argument("--out", metavar="DIR", help="output root (default 'out')")
    common.add_argument("--seed", type=int, help="seed for random densities")
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded BLAS for byte-identical outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="diracshell", description="Dirac delta-shell spectral toolkit")
    p.add_argument("--version", action="version", version=f"diracshell {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("suite", help=f"one of {', '.join(SUITE_NAMES)}")
    sub.add_parser("spectrum", parents=[common], help="gap eigenvalue scan (and oracle comparison on spheres)")
    sub.add_parser("critical", parents=[common], help="critical-strength diagnostics")
    sub.add_parser("resolvent", parents=[common], help="Krein resolvent of a Gaussian source")
    sub.add_parser("mesh-info", parents=[common], help="mesh diagnostics")
    return p


def main(argv=None) -> int:
    from .bs import NumericalRefusal

    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "verify" and args.suite not in SUITE_NAMES:
            raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}")
        cfg = build_config(args)
        if args.verb in ("spectrum", "resolvent") and cfg.eta is None and cfg.sign is None:
            raise ConfigError("eta: a strength or a critical sign is required")
        if args.verb == "verify":
            return cmd_verify(cfg, args.suite)
        if args.verb == "spectrum":
            return cmd_spectrum(cfg)
        if args.verb == "critical":
            return cmd_critical(cfg)
        if args.verb == "resolvent":
            return cmd_resolvent(cfg)
        return cmd_mesh_info(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalRefusal as e:
        print(f"numerical refusal: {e}", file=sys.stderr)
        return EXIT_REFUSAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
