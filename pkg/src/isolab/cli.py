"""Scenario runner: ``isolab run|list|profile|decompose|verify``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import concentration as conc
from . import limits as lim
from . import profile as prof
from . import sequences as seqs
from .manifold import (
    BOUNDARY_MODES,
    CapSpec,
    build_plane_with_caps,
    chart_from_window,
    dumps_grid,
    verify_bounded_geometry,
)
from .perimeter import STENCILS, dumps_set, to_pgm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED = 3

PIPELINES = ("verify-geometry", "profile", "decompose", "verify-limits")
GENERATORS = ("static-block", "two-diverging-blocks", "caps-family", "random-clusters", "cap-fill")
DEFAULT_TOLS = {"l1": 1e-9, "c0": 1e-9, "lsc": 1e-9, "union": 0.06, "continuity": None}


class ConfigError(ValueError):
    def __init__(self, path: tuple, message: str):
        self.path = path
        super().__init__(message)


# ---------------------------------------------------------------------------
# config loading with source positions
# ---------------------------------------------------------------------------

def _marks(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out.setdefault(path, (node.start_mark.line + 1, node.start_mark.column + 1))
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = (k.start_mark.line + 1, k.start_mark.column + 1)
            _marks(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _marks(v, path + (i,), out)
    return out


def _locate(marks: dict, path: tuple) -> tuple[int, int]:
    while path not in marks and path:
        path = path[:-1]
    return marks.get(path, (1, 1))


@dataclass
class ScenarioConfig:
    name: str
    description: str
    seed: int | None
    manifold: dict | None
    sequence: dict | None
    pipeline: list[str]
    profile: dict
    geometry: dict
    limits: dict
    decompose: dict
    tolerances: dict
    output: str | None
    source: str = ""
    raw: dict = field(default_factory=dict)


def _need(d: dict, key: str, path: tuple, kind=None):
    if key not in d:
        raise ConfigError(path + (key,), f"missing required field `{key}`")
    val = d[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(path + (key,), f"field `{key}` must be {kind.__name__ if isinstance(kind, type) else 'valid'}")
    return val


def _number(d: dict, key: str, path: tuple, default=None, positive=False, integer=False):
    if key not in d:
        if default is None:
            raise ConfigError(path + (key,), f"missing required field `{key}`")
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path + (key,), f"field `{key}` must be a number")
    if integer and not isinstance(val, int):
        raise ConfigError(path + (key,), f"field `{key}` must be an integer")
    if positive and not val > 0:
        raise ConfigError(path + (key,), f"field `{key}` must be positive (got {val!r})")
    return val


def _section(raw: dict, key: str) -> dict:
    val = raw.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError((key,), f"section `{key}` must be a mapping")
    return val


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError((), f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    marks = _marks(node) if node is not None else {}
    try:
        cfg = _validate(raw)
    except ConfigError as exc:
        line, col = _locate(marks, exc.path)
        raise ConfigError(exc.path, f"{source}:{line}:{col}: {exc}") from None
    cfg.source = source
    return cfg


def _validate(raw) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError((), "config must be a mapping")
    name = _need(raw, "name", (), str)
    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError(("seed",), "field `seed` must be an integer")
    manifold = raw.get("manifold")
    if manifold is not None:
        if not isinstance(manifold, dict):
            raise ConfigError(("manifold",), "section `manifold` must be a mapping")
        p = ("manifold",)
        for key in ("width", "height"):
            if _number(manifold, key, p, integer=True) < 2:
                raise ConfigError(p + (key,), f"field `{key}` must be at least 2")
        _number(manifold, "h", p, default=1.0, positive=True)
        mode = manifold.get("boundary_mode", "open")
        if mode not in BOUNDARY_MODES:
            raise ConfigError(p + ("boundary_mode",), f"field `boundary_mode` must be one of {list(BOUNDARY_MODES)}")
        caps = manifold.get("caps")
        if caps is not None:
            cp = p + ("caps",)
            if not isinstance(caps, dict):
                raise ConfigError(cp, "section `caps` must be a mapping")
            _need(caps, "centers", cp, list)
            if _number(caps, "amplitude", cp) < 0:
                raise ConfigError(cp + ("amplitude",), "field `amplitude` must be nonnegative")
            _number(caps, "radius", cp, positive=True)
    sequence = raw.get("sequence")
    if sequence is not None:
        if not isinstance(sequence, dict):
            raise ConfigError(("sequence",), "section `sequence` must be a mapping")
        gen = _need(sequence, "generator", ("sequence",), str)
        if gen not in GENERATORS:
            raise ConfigError(("sequence", "generator"), f"unknown generator `{gen}`; choose from {list(GENERATORS)}")
        params = sequence.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError(("sequence", "params"), "field `params` must be a mapping")
    pipeline = raw.get("pipeline", "all")
    if pipeline == "all":
        pipeline = list(PIPELINES)
    if isinstance(pipeline, str):
        pipeline = [pipeline]
    if not isinstance(pipeline, list) or any(p not in PIPELINES for p in pipeline):
        raise ConfigError(("pipeline",), f"field `pipeline` must be `all` or a list drawn from {list(PIPELINES)}")
    prof_cfg = _section(raw, "profile")
    if prof_cfg:
        st = prof_cfg.get("stencil", "crofton16")
        if st not in STENCILS:
            raise ConfigError(("profile", "stencil"), f"unknown stencil `{st}`")
        methods = prof_cfg.get("methods", ["anneal"])
        if not isinstance(methods, list) or any(m not in (prof.ORACLE, prof.LAGRANGIAN, prof.ANNEAL) for m in methods):
            raise ConfigError(("profile", "methods"), "field `methods` must list oracle, lagrangian or anneal")
    tols = dict(DEFAULT_TOLS)
    for k, v in _section(raw, "tolerances").items():
        tols[k] = _number({k: v}, k, ("tolerances",), positive=True)
    stochastic = ("profile" in pipeline and prof.ANNEAL in prof_cfg.get("methods", [prof.ANNEAL])) or (
        sequence is not None and sequence.get("generator") == "random-clusters"
    )
    if stochastic and seed is None:
        raise ConfigError(("seed",), "field `seed` is required for stochastic pipelines")
    if "profile" in pipeline or "verify-geometry" in pipeline:
        if manifold is None and sequence is None:
            raise ConfigError(("manifold",), "profile and geometry pipelines need a `manifold` or `sequence` section")
    if ("decompose" in pipeline or "verify-limits" in pipeline) and sequence is None:
        raise ConfigError(("sequence",), "decomposition pipelines need a `sequence` section")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise ConfigError(("output",), "field `output` must be a path string")
    return ScenarioConfig(
        name=name,
        description=str(raw.get("description", "")),
        seed=seed,
        manifold=manifold,
        sequence=sequence,
        pipeline=pipeline,
        profile=prof_cfg,
        geometry=_section(raw, "geometry"),
        limits=_section(raw, "limits"),
        decompose=_section(raw, "decompose"),
        tolerances=tols,
        output=out,
        raw=raw,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def bundled_dir():
    return resources.files("isolab") / "scenarios"


def list_scenarios(custom_dir: str | Path | None = None) -> list[tuple[str, str, str]]:
    """(name, description, path) for bundled scenarios plus any valid ones in ``custom_dir``."""
    entries = {}
    dirs = [bundled_dir()]
    if custom_dir is not None:
        dirs.append(Path(custom_dir))
    for d in dirs:
        for f in sorted(d.iterdir(), key=lambda p: p.name):
            if not f.name.endswith((".yaml", ".yml")):
                continue
            try:
                cfg = parse_config(f.read_text(), str(f))
            except (ConfigError, OSError):
                continue
            entries[cfg.name] = (cfg.name, cfg.description, str(f))
    return [entries[k] for k in sorted(entries)]


def resolve_config(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    for name, _, path in list_scenarios():
        if name == ref:
            return Path(path)
    raise FileNotFoundError(f"no config file or bundled scenario named {ref!r}")


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _build_manifold(spec: dict):
    caps = spec.get("caps")
    capspec = None
    if caps:
        capspec = CapSpec.uniform([tuple(c) for c in caps["centers"]], float(caps["amplitude"]), float(caps["radius"]))
    return build_plane_with_caps(int(spec["width"]), int(spec["height"]), float(spec.get("h", 1.0)),
                                 spec.get("boundary_mode", "open"), capspec)


def _build_sequence(spec: dict, seed: int | None):
    gen = spec["generator"]
    params = dict(spec.get("params") or {})
    info: dict = {}
    if gen == "static-block":
        seq = seqs.static_block_sequence(**params)
    elif gen == "two-diverging-blocks":
        seq = seqs.two_diverging_blocks(**params)
    elif gen == "caps-family":
        seq, info = seqs.caps_family_sequence(**params)
    elif gen == "random-clusters":
        seq, info = seqs.random_cluster_sequence(int(seed), **params)
    else:  # cap-fill
        fam_params = {k: params[k] for k in ("n_terms", "n_rays", "step", "first", "amplitude", "radius", "fill_radius")
                      if k in params}
        fam = seqs.cap_fill_family(**fam_params)
        units = float(params.get("volume_in_caps", 1.0))
        seq = seqs.cap_fill_sequence(fam, units * fam.capacity)
        info = {"family": fam, "volume_in_caps": units}
    return seq, info


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _jdump(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating,)):
            return float(o)
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, tuple):
            return list(o)
        raise TypeError(f"not serializable: {type(o)}")

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return repr(o)
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    return json.dumps(clean(obj), sort_keys=True, indent=2, default=default) + "\n"


class Run:
    def __init__(self, cfg: ScenarioConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.checks: list[dict] = []
        self.values: dict = {}
        self._seq = None
        self._decomp = None

    def write(self, name: str, text: str):
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)

    def check(self, name: str, ok: bool, report: str):
        self.checks.append({"name": name, "pass": bool(ok), "report": report})

    def value(self, name: str, value, report: str, key: str):
        self.values[name] = {"value": value, "report": report, "key": key}

    @property
    def seed(self) -> int:
        return 0 if self.cfg.seed is None else int(self.cfg.seed)

    def sequence(self):
        if self._seq is None:
            self._seq = _build_sequence(self.cfg.sequence, self.cfg.seed)
        return self._seq

    def base_grid(self):
        if self.cfg.manifold is not None:
            return _build_manifold(self.cfg.manifold)
        seq, _ = self.sequence()
        return seq[len(seq) - 1].grid

    # -- pipelines --------------------------------------------------------

    def verify_geometry(self):
        g = self.base_grid()
        k = float(self.cfg.geometry.get("k", 0.0))
        v0 = float(self.cfg.geometry.get("v0", 2.0))
        rep = verify_bounded_geometry(g, k, v0)
        self.write("grid.json", dumps_grid(g) + "\n")
        self.write("geometry.json", _jdump(rep.to_dict()))
        self.check("bounded-geometry", all(rep.passes), "geometry.json")
        self.value("min_curvature", rep.min_curvature, "geometry.json", "min_curvature")
        self.value("min_unit_ball_volume", rep.min_unit_ball_volume, "geometry.json", "min_unit_ball_volume")

    def profile(self):
        pc = self.cfg.profile
        g = self.base_grid()
        st = pc.get("stencil", "crofton16")
        methods = pc.get("methods", [prof.ANNEAL])
        volumes = [float(v) for v in pc.get("volumes", [])]
        sched = prof.AnnealSchedule(**(pc.get("schedule") or {}))
        report: dict = {"grid_id": g.id, "stencil": st, "schedule": sched.to_dict()}
        curves = {}
        if prof.ORACLE in methods:
            curves[prof.ORACLE] = prof.brute_force_profile(g, volumes or None, st)
        if prof.LAGRANGIAN in methods:
            curves[prof.LAGRANGIAN] = prof.lagrangian_cut_profile(g, pc.get("lambdas", "auto"), st)
        if prof.ANNEAL in methods:
            vs = volumes or [p.v for p in curves.get(prof.ORACLE, prof.ProfileCurve((), g.id, st)).points
                             if 0 < p.v < g.total_volume]
            curves[prof.ANNEAL] = prof.annealed_profile(g, vs, st, sched, self.seed)
        tol = self.cfg.tolerances.get("continuity") or prof.continuity_tolerance(g)
        for m, curve in curves.items():
            self.write(f"profile_{m}.csv", curve.to_csv())
            if len(curve) >= 3 and m != prof.LAGRANGIAN:
                cr = prof.profile_continuity_report(curve, tol=tol, step=float(g.cell_volumes.min()))
                report[f"continuity_{m}"] = cr.to_dict()
                self.check(f"continuity-{m}", cr.passes, "profile.json")
        if prof.ORACLE in curves and prof.LAGRANGIAN in curves:
            env = prof.lower_convex_envelope([(p.v, p.I_v) for p in prof.brute_force_profile(g, None, st)])
            lag = [(p.v, p.I_v) for p in curves[prof.LAGRANGIAN]]
            report["envelope"] = [list(e) for e in env]
            report["lagrangian"] = [list(e) for e in lag]
            self.check("oracle-envelope", env == lag, "profile.json")
        if prof.ORACLE in curves and prof.ANNEAL in curves:
            oracle = {p.v: p.I_v for p in curves[prof.ORACLE]}
            diffs = [[p.v, p.I_v, oracle.get(p.v)] for p in curves[prof.ANNEAL]]
            report["anneal_vs_oracle"] = diffs
            self.check("anneal-matches-oracle", all(o is not None and a == o for _, a, o in diffs), "profile.json")
        self.write("profile.json", _jdump(report))

    def decomposition(self):
        if self._decomp is None:
            seq, info = self.sequence()
            dc = self.cfg.decompose
            params = conc.DecompositionParams(
                working_radius=dc.get("working_radius"),
                tail=int(dc.get("tail", 5)),
                piece_cap=int(dc.get("piece_cap", 64)),
                wall_guard=bool(dc.get("wall_guard", True)),
            )
            self._decomp = conc.decompose(seq, params)
        return self._decomp

    def decompose(self):
        seq, info = self.sequence()
        d = self.decomposition()
        rep = d.to_dict()
        defects = d.partition_defects(seq)
        rep["partition"] = [list(x) for x in defects]
        stats = [s for p in d.pieces for s in p.residual_stats]
        c_cal = conc.calibrate_nonevanescence(seq.terms, stats, d.params.calibration_radius, seq.stencil)
        audit = conc.nonevanescence_audit(d, c_cal)
        rep["nonevanescence"] = audit.to_dict()
        v_star = self._v_star(info)
        pc = lim.check_piece_count_bound(d, seq.volume_bound, v_star, almost_minimizing=True)
        rep["piece_count"] = pc.to_dict()
        self.write("decomposition.json", _jdump(rep))
        for i, p in enumerate(d.pieces):
            self.write(f"masks/piece_{i}.pgm", to_pgm(p.traces[-1]))
            self.write(f"sets/piece_{i}.json", dumps_set(p.traces[-1]) + "\n")
        constant = len(set(seq.volumes)) == 1
        self.check("partition-exact", all(e and x == 0 for _, e, x in defects), "decomposition.json")
        if constant:
            self.check("volume-captured", seq.volume_bound - d.v_bar <= d.stop_threshold, "decomposition.json")
        self.check("perimeter-slack", d.A_bar <= seq.perimeter_bound + d.slack + 1e-9, "decomposition.json")
        self.check("nonevanescence", audit.passes and c_cal > 0, "decomposition.json")
        self.check("piece-count-bound", pc.passes, "decomposition.json")
        self.check("complete", not d.incomplete, "decomposition.json")
        self.value("N", d.N, "decomposition.json", "N")
        self.value("v_bar", d.v_bar, "decomposition.json", "v_bar")
        self.value("A_bar", d.A_bar, "decomposition.json", "A_bar")
        self.value("v_star", v_star, "decomposition.json", "piece_count.v_star")
        self.value("c_cal", c_cal, "decomposition.json", "nonevanescence.c_cal")

    def _v_star(self, info) -> float:
        vs = self.cfg.decompose.get("v_star", "empirical")
        if vs != "empirical":
            return float(vs)
        fam = info.get("family")
        if fam is None:
            raise ConfigError(("decompose", "v_star"), "`v_star: empirical` needs the cap-fill generator")
        return empirical_v_star(fam)

    def verify_limits(self):
        seq, info = self.sequence()
        d = self.decomposition()
        lc = self.cfg.limits
        R = float(lc.get("window", 8.0))
        K = float(lc.get("K", 2.0 * d.params.working_radius))
        tol = float(self.cfg.tolerances.get("c0", lim.EXACT_TOL))
        templates = {}
        tcfg = lc.get("template")
        if tcfg:
            canon, c = seqs.canonical_cap_grid(int(tcfg.get("size", 32)), float(tcfg.get("amplitude", 1.0)),
                                               float(tcfg.get("radius", 4.0)))
            templates[str(tcfg.get("name", "one-cap"))] = canon
        limits = {}
        lim_rep = {}
        for i, p in enumerate(d.pieces):
            if lim.track_is_bounded(p.centers, K, seq.h):
                limits[i] = None
                lim_rep[str(i)] = {"bounded": True}
                continue
            lm = lim.detect_limit_manifold(seq, p.centers, R, tol, templates, p.indices, d.params.tail, i)
            limits[i] = lm
            lim_rep[str(i)] = {"bounded": False, **lm.to_dict()}
            self.write(f"charts/piece_{i}.json", dumps_grid(lm.chart) + "\n")
        region = lim.assemble_generalized_region(d, limits, seq.stencil)
        conv = lim.check_multipointed_convergence(seq, d, region, l1_tol=self.cfg.tolerances["l1"],
                                                  lsc_tol=self.cfg.tolerances["lsc"])
        blocks = lim.cluster_diverging_tracks([p.centers for p in d.pieces], K, seq.h)
        rep = {"limits": lim_rep, "region": region.to_dict(), "convergence": conv.to_dict(), "track_blocks": blocks}
        for c in region.components:
            self.write(f"masks/component_{c.piece}.pgm", to_pgm(c.cells))
        union = lc.get("union_profile")
        if union:
            g = seq[len(seq) - 1].grid
            charts = [chart_from_window(templates[n], (templates[n].height // 2, templates[n].width // 2), R)
                      for n in sorted(templates)]
            ur = lim.profile_union_equality(g, charts, [float(v) for v in union["volumes"]], seq.stencil,
                                            seed=self.seed, tol=self.cfg.tolerances["union"])
            rep["union_profile"] = ur.to_dict()
            self.check("union-profile", ur.passes, "limits.json")
        self.write("limits.json", _jdump(rep))
        self.check("multipointed-convergence", conv.passes, "limits.json")
        self.check("lower-semicontinuity", conv.lsc_holds, "limits.json")
        self.check("volume-continuity", conv.volume_continuity, "limits.json")
        self.check("volume-additivity", region.total_volume == math.fsum(c.volume for c in region.components),
                   "limits.json")
        self.value("total_volume", region.total_volume, "limits.json", "region.total_volume")
        self.value("total_perimeter", region.total_perimeter, "limits.json", "region.total_perimeter")

    def finish(self) -> int:
        failed = [c["name"] for c in self.checks if not c["pass"]]
        summary = {
            "scenario": self.cfg.name,
            "seed": self.cfg.seed,
            "pipeline": self.cfg.pipeline,
            "checks": self.checks,
            "values": self.values,
            "passed": not failed,
            "failed": failed,
        }
        self.write("summary.json", _jdump(summary))
        return EXIT_OK if not failed else EXIT_FAILED


def empirical_v_star(fam: "seqs.CapFillFamily", steps: int = 4, span: int = 2) -> float:
    """Largest fill volume on the mesh ``capacity * i / steps`` below which decomposition always gives N = 1."""
    best = 0.0
    for i in range(1, span * steps + 1):
        u = fam.capacity * i / steps
        if conc.decompose(seqs.cap_fill_sequence(fam, u)).N != 1:
            break
        best = u
    return best


def run_scenario(cfg: ScenarioConfig, out: str | Path | None = None, pipeline: list[str] | None = None) -> int:
    out_dir = Path(out or os.environ.get("ISOLAB_OUT") or cfg.output or Path("isolab-out") / cfg.name)
    run = Run(cfg, out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = pipeline or cfg.pipeline
    for step in PIPELINES:
        if step not in steps:
            continue
        if step == "verify-geometry":
            run.verify_geometry()
        elif step == "profile":
            run.profile()
        elif step == "decompose":
            run.decompose()
        elif step == "verify-limits":
            run.verify_limits()
    run.write("config.json", _jdump(cfg.raw))
    return run.finish()


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _apply_overrides(cfg: ScenarioConfig, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = args.seed
    for item in getattr(args, "tol", None) or []:
        name, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(("tolerances",), f"--tol expects NAME=VAL, got {item!r}")
        try:
            x = float(val)
        except ValueError:
            raise ConfigError(("tolerances", name), f"tolerance `{name}` must be a number") from None
        if not x > 0:
            raise ConfigError(("tolerances", name), f"tolerance `{name}` must be positive")
        cfg.tolerances[name] = x
        cfg.raw.setdefault("tolerances", {})[name] = x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isolab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="config file or bundled scenario name")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--tol", action="append", metavar="NAME=VAL", help="override a tolerance")

    common(sub.add_parser("run", help="run the config's pipelines"))
    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.add_argument("--dir", help="extra scenario directory")
    common(sub.add_parser("profile", help="profile pipeline only"))
    common(sub.add_parser("decompose", help="decomposition pipeline only"))
    vp = sub.add_parser("verify", help="geometry or limit verification")
    vp.add_argument("what", choices=("geometry", "limits"))
    common(vp)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc, _ in list_scenarios(args.dir):
            print(f"{name}\t{desc}")
        return EXIT_OK
    try:
        cfg = load_config(resolve_config(args.config))
        _apply_overrides(cfg, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pipeline = {
        "run": None,
        "profile": ["profile"],
        "decompose": ["decompose"],
        "verify": ["verify-geometry"] if getattr(args, "what", None) == "geometry" else ["verify-limits"],
    }[args.command]
    try:
        status = run_scenario(cfg, args.out, pipeline)
    except ConfigError as exc:
        print(f"error: {cfg.source}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = json.loads((Path(args.out or os.environ.get("ISOLAB_OUT") or cfg.output
                                or Path("isolab-out") / cfg.name) / "summary.json").read_text())
    for c in summary["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}")
    if status == EXIT_FAILED:
        print(f"failed checks: {', '.join(summary['failed'])}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
