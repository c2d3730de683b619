"""Command line front end and batch pipeline runner."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import dpw, factor, uniton, verify
from .errors import (
    ConfigError,
    DomainError,
    DpwError,
    InvariantViolation,
    ModeError,
    NotUnimodular,
    ShapeError,
    Unsupported,
)
from .loopalg import LaurentMatrix, SymmetricSpaceSpec, random_twisted_loop

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

VALIDATION_ERRORS = (ConfigError, InvariantViolation, Unsupported, DomainError, ShapeError, ModeError, NotUnimodular)

DEFAULT_TOLERANCES = {
    "factor": factor.FACTOR_TOL,
    "embed": uniton.EMBED_TOL,
    "monodromy": uniton.MONODROMY_TOL,
    "mc": 1e-3,
    "es": 1e-3,
    "reality": 1e-8,
    "twist": 1e-8,
    "tail": dpw.TAIL_TOL,
}

STAGES = ("frames", "embed", "solution", "number", "dress", "dualize", "monodromy", "classify", "verify")
STAGE_DEPS = {
    "frames": (),
    "embed": ("frames",),
    "solution": ("frames",),
    "number": ("solution",),
    "dress": ("frames",),
    "dualize": ("frames",),
    "monodromy": (),
    "classify": ("frames",),
    "verify": ("frames",),
}
CONFIG_KEYS = {"potential", "spec", "grid", "stages", "output", "tolerances"}


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------


def _read_json(path: str | Path) -> Any:
    path = Path(path)
    text = path.read_text()  # OSError propagates as an I/O failure
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno, path=str(path)) from None


def _write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _emit(obj: Any, out: str | None) -> None:
    if out:
        _write_json(out, obj)
    else:
        json.dump(obj, sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")


SPEC_KEYS = ("n", "h", "realForm", "p", "q")


def spec_from_obj(obj: Any, where: str = "$") -> tuple[SymmetricSpaceSpec, complex]:
    """Spec and basepoint from a spec object or a potential object."""
    if not isinstance(obj, Mapping):
        raise ConfigError("spec must be a JSON object", path=where)
    try:
        spec = SymmetricSpaceSpec.from_dict({k: obj[k] for k in SPEC_KEYS if k in obj})
    except DpwError as e:
        if isinstance(e, Unsupported):
            raise Unsupported(f"{e} ({where})") from None
        raise ConfigError(str(e), path=where) from None
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"malformed spec: {e}", path=where) from None
    bp = obj.get("basepoint", [0, 0])
    z0 = complex(*bp) if isinstance(bp, list) else complex(bp)
    return spec, z0


def load_spec(path: str) -> tuple[SymmetricSpaceSpec, complex]:
    return spec_from_obj(_read_json(path), where=str(path))


def load_potential(path: str | Path) -> dpw.Potential:
    obj = _read_json(path)
    try:
        return dpw.potential_from_dict(obj)
    except ConfigError as e:
        raise ConfigError(f"{e} in {path}") from None


def load_loop(path: str | Path) -> LaurentMatrix:
    obj = _read_json(path)
    try:
        return LaurentMatrix.from_json(obj)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"malformed loop: {e}", path=str(path)) from None


def load_frames(path: str | Path, spec: SymmetricSpaceSpec, basepoint: complex) -> dpw.FrameField:
    data = _read_json(path)
    try:
        return dpw.FrameField.from_json(data, spec, basepoint)
    except ConfigError as e:
        raise ConfigError(f"{e} in {path}") from None
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"malformed frame file: {e}", path=str(path)) from None


def parse_grid(obj: Any, where: str = "$.grid") -> np.ndarray:
    """``{center, radius, steps}`` or ``{points: [[re, im], ...]}`` (or a bare point list)."""
    if isinstance(obj, list):
        obj = {"points": obj}
    if not isinstance(obj, Mapping):
        raise ConfigError("grid must be an object or a list of points", path=where)
    if "points" in obj:
        extra = set(obj) - {"points"}
        if extra:
            raise ConfigError(f"unknown grid keys {sorted(extra)}", path=where)
        try:
            pts = np.array([complex(p[0], p[1]) if isinstance(p, list) else complex(p) for p in obj["points"]])
        except (TypeError, ValueError, IndexError):
            raise ConfigError("points must be [re, im] pairs", path=where + ".points") from None
        if pts.size == 0:
            raise ConfigError("grid has no points", path=where + ".points")
        return pts[None]
    extra = set(obj) - {"center", "radius", "steps"}
    if extra:
        raise ConfigError(f"unknown grid keys {sorted(extra)}", path=where)
    try:
        c = obj.get("center", [0, 0])
        center = complex(c[0], c[1]) if isinstance(c, list) else complex(c)
        radius = float(obj["radius"])
        steps = int(obj["steps"])
    except KeyError as e:
        raise ConfigError(f"grid needs key {e}", path=where) from None
    except (TypeError, ValueError, IndexError):
        raise ConfigError("grid center must be [re, im], radius a number, steps an integer", path=where) from None
    if steps < 1 or radius < 0:
        raise ConfigError("grid needs steps >= 1 and radius >= 0", path=where)
    return dpw.square_grid(center, radius, steps)


def parse_grid_arg(text: str) -> np.ndarray:
    """``cx,cy,radius,steps`` or inline JSON or a JSON file."""
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        return parse_grid(_read_json(p), where=str(p))
    if text.lstrip().startswith(("{", "[")):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid grid JSON: {e.msg}", line=e.lineno, column=e.colno, path="--grid") from None
        return parse_grid(obj, where="--grid")
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError("grid must be 'cx,cy,radius,steps', JSON or a .json file", path="--grid")
    try:
        cx, cy, r = (float(x) for x in parts[:3])
        steps = int(parts[3])
    except ValueError:
        raise ConfigError("grid must be 'cx,cy,radius,steps'", path="--grid") from None
    return dpw.square_grid(complex(cx, cy), r, steps)


def parse_path(obj: Any, where: str) -> tuple[str, list]:
    """A generator path: ``{label, circle: {center, radius, vertices}}`` or ``{label, polygon: [...]}``."""
    if not isinstance(obj, Mapping):
        raise ConfigError("path must be an object", path=where)
    extra = set(obj) - {"label", "circle", "polygon"}
    if extra:
        raise ConfigError(f"unknown path keys {sorted(extra)}", path=where)
    label = str(obj.get("label", "generator"))
    if "circle" in obj:
        c = obj["circle"]
        try:
            cc = c.get("center", [0, 0])
            center = complex(cc[0], cc[1]) if isinstance(cc, list) else complex(cc)
            return label, uniton.circle_path(center, float(c.get("radius", 1.0)), int(c.get("vertices", 256)))
        except (AttributeError, TypeError, ValueError, IndexError):
            raise ConfigError("circle needs center [re, im], radius and vertices", path=where + ".circle") from None
    if "polygon" in obj:
        try:
            return label, [complex(p[0], p[1]) for p in obj["polygon"]]
        except (TypeError, ValueError, IndexError):
            raise ConfigError("polygon vertices must be [re, im] pairs", path=where + ".polygon") from None
    raise ConfigError("path needs 'circle' or 'polygon'", path=where)


def parse_path_arg(text: str) -> tuple[str, list]:
    """``circle:cx,cy,r[,vertices]`` or a JSON file holding a path object."""
    if text.startswith("circle:"):
        try:
            vals = [float(x) for x in text[7:].split(",")]
            m = int(vals[3]) if len(vals) > 3 else 256
            return "circle", uniton.circle_path(complex(vals[0], vals[1]), vals[2], m)
        except (ValueError, IndexError):
            raise ConfigError("expected circle:cx,cy,radius[,vertices]", path="--path") from None
    return parse_path(_read_json(text), where=text)


def parse_tolerances(items: Sequence[str] | Mapping | None, where: str = "--tol") -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    if not items:
        return tol
    pairs = items.items() if isinstance(items, Mapping) else (s.split("=", 1) if "=" in s else (s, None) for s in items)
    for name, value in pairs:
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {name!r}; known: {', '.join(sorted(DEFAULT_TOLERANCES))}", path=where)
        try:
            tol[name] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"tolerance {name} needs a numeric value", path=where) from None
        if not tol[name] > 0:
            raise ConfigError(f"tolerance {name} must be positive", path=where)
    return tol


# ---------------------------------------------------------------------------
# plot export
# ---------------------------------------------------------------------------


def sphere_points(mm: uniton.ModifiedHarmonicMap) -> np.ndarray:
    """Unit 3-vectors ``(x, y, w)`` with ``FF(z, 1) = x s1 + y s2 + w s3`` (Pauli basis)."""
    if mm.n != 2:
        raise Unsupported("sphere export needs n = 2")
    if mm.spec.real_form != "compact":
        raise Unsupported("sphere export needs the compact real form")
    V = mm.values(1.0)
    x = (V[..., 0, 1] + V[..., 1, 0]).real / 2
    y = (V[..., 1, 0] - V[..., 0, 1]).imag / 2
    w = (V[..., 0, 0] - V[..., 1, 1]).real / 2
    return np.stack([x, y, w], axis=-1)


def export_sphere_map(mm: uniton.ModifiedHarmonicMap, path: str | Path) -> int:
    """Write ``re_z, im_z, x, y, z`` rows for in-cell points; returns the row count."""
    P = sphere_points(mm)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with path.open("w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["re_z", "im_z", "x", "y", "z"])
        for idx in np.ndindex(mm.shape):
            if not mm.valid[idx]:
                continue
            z = mm.z[idx]
            wr.writerow([repr(float(z.real)), repr(float(z.imag))] + [repr(float(v)) for v in P[idx]])
            rows += 1
    return rows


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    potential: Path
    spec: SymmetricSpaceSpec | None
    grid: np.ndarray
    stages: list
    output: Path
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @property
    def stage_names(self) -> list[str]:
        return [s[0] for s in self.stages]


def _stage_entry(s: Any, i: int, base: Path) -> tuple[str, Any]:
    where = f"$.stages[{i}]"
    if isinstance(s, str):
        name, arg = s, None
    elif isinstance(s, Mapping) and len(s) == 1:
        (name, arg), = s.items()
    else:
        raise ConfigError("a stage is a name or a one-key object {name: argument}", path=where)
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}; known: {', '.join(STAGES)}", path=where)
    if name == "dress" and not isinstance(arg, str):
        raise ConfigError("dress needs the path of an h+ loop file: {\"dress\": \"hplus.json\"}", path=where)
    if name == "dress":
        arg = base / arg
    if name == "monodromy":
        arg = [] if arg is None else arg
        if not isinstance(arg, list):
            raise ConfigError("monodromy takes a list of paths", path=where)
        arg = [parse_path(p, f"{where}.monodromy[{k}]") for k, p in enumerate(arg)]
    if name == "verify":
        arg = list(verify.CHECKS) if arg is None else arg
        if not isinstance(arg, list) or any(c not in verify.CHECKS for c in arg):
            raise ConfigError(f"verify takes a list drawn from {', '.join(verify.CHECKS)}", path=where)
    if name == "dualize" and arg is not None:
        arg = spec_from_obj(arg, where + ".dualize")[0]
    return name, arg


def parse_run_config(obj: Any, base: Path = Path("."), out_override: str | None = None,
                     tol_override: Sequence[str] | None = None) -> RunConfig:
    """Validate a run configuration object; relative paths resolve against ``base``."""
    if not isinstance(obj, Mapping):
        raise ConfigError("run configuration must be a JSON object", path="$")
    extra = set(obj) - CONFIG_KEYS
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}; allowed: {', '.join(sorted(CONFIG_KEYS))}", path="$")
    for k in ("potential", "grid", "stages"):
        if k not in obj:
            raise ConfigError(f"missing required key {k!r}", path="$")
    pot = base / str(obj["potential"])
    spec = None
    if "spec" in obj:
        s = obj["spec"]
        spec = load_spec(str(base / s))[0] if isinstance(s, str) else spec_from_obj(s, "$.spec")[0]
    grid = parse_grid(obj["grid"])
    raw = obj["stages"]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("stages must be a nonempty list", path="$.stages")
    stages = [_stage_entry(s, i, base) for i, s in enumerate(raw)]
    seen: list[str] = []
    for i, (name, _) in enumerate(stages):
        if name in seen:
            raise ConfigError(f"stage {name!r} listed twice", path=f"$.stages[{i}]")
        for d in STAGE_DEPS[name]:
            if d not in seen:
                raise ConfigError(f"stage {name!r} must come after {d!r}", path=f"$.stages[{i}]")
        if name == "classify" and "monodromy" in [s[0] for s in stages[i + 1:]]:
            raise ConfigError("stage 'classify' must come after 'monodromy'", path=f"$.stages[{i}]")
        seen.append(name)
    tol = parse_tolerances(obj.get("tolerances"), where="$.tolerances")
    if tol_override:
        named = {s.split("=", 1)[0] for s in tol_override}
        tol.update({k: v for k, v in parse_tolerances(tol_override).items() if k in named})
    out = Path(out_override) if out_override else base / str(obj.get("output", "out"))
    return RunConfig(pot, spec, grid, stages, out, tol)


def _json_float(x: float):
    return None if x is None or not np.isfinite(x) else float(x)


def run_pipeline(cfg: RunConfig) -> tuple[int, dict]:
    """Run the stages in order; returns the exit status and the summary."""
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"completedStages": [], "monodromy": [], "verdicts": {}, "residuals": {}}
    tol = cfg.tolerances
    state: dict = {}
    status = EXIT_OK
    current = "load"
    try:
        eta = load_potential(cfg.potential)
        if cfg.spec is not None:
            if cfg.spec.n != eta.spec.n or cfg.spec.h != eta.spec.h:
                raise ConfigError("spec does not match the potential's n and h", path="$.spec")
            eta = dpw.Potential(cfg.spec, eta.terms, eta.basepoint, eta.kind)
        summary["spec"] = eta.spec.to_dict()
        for name, arg in cfg.stages:
            current = name
            if name == "frames":
                fr = dpw.build_extended_frame(eta, cfg.grid, tail_tol=tol["tail"])
                state["frames"] = fr
                _write_json(out / "frames.json", fr.to_json())
                summary["frames"] = {
                    "points": int(fr.in_cell.size),
                    "inCell": int(fr.in_cell.sum()),
                    "degreeSpread": list(fr.degree_spread()),
                }
            elif name == "embed":
                mm = uniton.cartan_embed(state["frames"], tol=tol["embed"])
                state["embed"] = mm
                _write_json(out / "embedded.json", mm.to_json())
                if mm.n == 2 and mm.spec.real_form == "compact":
                    export_sphere_map(mm, out / "sphere.csv")
            elif name == "solution":
                phi = uniton.extended_solution(state["frames"])
                state["solution"] = phi
                _write_json(out / "solution.json", phi.to_json())
                summary["residuals"]["phiAtOne"] = _json_float(phi.at_one_is_identity())
            elif name == "number":
                cert = uniton.uniton_number(state["solution"])
                _write_json(out / "uniton_number.json", cert.to_json())
                summary["unitonNumber"] = cert.to_json()
            elif name == "dress":
                hp = load_loop(arg)
                d = uniton.dress(hp, state["frames"])
                _write_json(out / "dressed.json", d.to_json())
                summary["dressed"] = {"inCell": int(d.in_cell.sum()), "degreeSpread": list(d.degree_spread())}
            elif name == "dualize":
                d = uniton.dualize(state["frames"], arg)
                _write_json(out / "dual.json", d.to_json())
                summary["dual"] = {"spec": d.spec.to_dict(), "inCell": int(d.in_cell.sum()),
                                   "isLaurent": d.is_laurent()}
            elif name == "monodromy":
                recs = [uniton.monodromy(eta, path, label=label) for label, path in arg]
                state["monodromy"] = recs
                _write_json(out / "monodromy.json", [r.to_json() for r in recs])
                summary["monodromy"] = [{"pathLabel": r.path_label, "maxDeviation": r.max_deviation} for r in recs]
            elif name == "classify":
                v = uniton.is_finite_uniton_type(state["frames"], state.get("monodromy", []), tol=tol["monodromy"])
                _write_json(out / "classification.json", v)
                summary["classification"] = v
            elif name == "verify":
                reps = verify.run_checks(state["frames"], arg, tolerances=tol)
                _write_json(out / "report.json", [r.to_json() for r in reps])
                for r in reps:
                    summary["verdicts"][r.check_name] = r.verdict
                    summary["residuals"][r.check_name] = _json_float(r.max_residual)
                if any(r.verdict == "fail" for r in reps):
                    status = EXIT_NUMERIC
            summary["completedStages"].append(name)
    except OSError as e:
        summary["failure"] = {"stage": current, "error": f"I/O: {e}"}
        status = EXIT_IO
    except VALIDATION_ERRORS as e:
        summary["failure"] = {"stage": current, "error": f"{type(e).__name__}: {e}"}
        status = EXIT_VALIDATION
    except (DpwError, np.linalg.LinAlgError) as e:
        summary["failure"] = {"stage": current, "error": f"{type(e).__name__}: {e}"}
        status = EXIT_NUMERIC
    _write_json(out / "summary.json", summary)
    return status, summary


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_factor(args) -> int:
    tol = args.tolerances["factor"]
    if args.kind == "suite":
        spec = load_spec(args.spec)[0] if args.spec else SymmetricSpaceSpec(2, (1, -1))
        rng = np.random.default_rng(args.seed)
        worst = {"birkhoff": 0.0, "iwasawa": 0.0, "oracle": 0.0}
        failures = 0
        for _ in range(args.count):
            g = random_twisted_loop(rng, spec, eps=args.eps)
            try:
                worst["birkhoff"] = max(worst["birkhoff"], factor.birkhoff_round_trip_residual(g, tol=tol))
                r = factor.iwasawa(g, spec, tol=tol)
                worst["iwasawa"] = max(worst["iwasawa"], r.residual)
                if spec.real_form == "compact":
                    o = verify.pointwise_factorization_oracle(g, spec, unitary=r.unitary)
                    worst["oracle"] = max(worst["oracle"], o.max_residual)
            except DpwError:
                failures += 1
        _emit({"seed": args.seed, "count": args.count, "failures": failures, "maxResiduals": worst}, args.out)
        return EXIT_OK if failures == 0 else EXIT_NUMERIC
    gamma = load_loop(args.loop)
    if args.kind == "birkhoff":
        b = factor.birkhoff(gamma, tol=tol)
        _emit(factor.birkhoff_to_json(b), args.out)
        return EXIT_OK
    if not args.spec:
        raise ConfigError("factor iwasawa needs --spec", path="--spec")
    spec = load_spec(args.spec)[0]
    r = factor.try_iwasawa(gamma, spec, tol=tol)
    _emit(factor.iwasawa_to_json(r), args.out)
    return EXIT_OK if r.ok else EXIT_NUMERIC


def _cmd_dpw(args) -> int:
    eta = load_potential(args.potential)
    grid = parse_grid_arg(args.grid)
    fr = dpw.build_extended_frame(eta, grid, mode=args.mode, tail_tol=args.tolerances["tail"])
    _emit(fr.to_json(), args.out)
    n_out = int((~fr.in_cell).sum())
    if n_out:
        print(f"{n_out} of {fr.in_cell.size} points outside the Iwasawa cell", file=sys.stderr)
    return EXIT_OK


def _frames_from_args(args) -> dpw.FrameField:
    if not args.spec:
        raise ConfigError("needs --spec (a spec or potential file)", path="--spec")
    spec, z0 = load_spec(args.spec)
    if args.basepoint is not None:
        z0 = complex(args.basepoint.replace(" ", ""))
    return load_frames(args.frames, spec, z0)


def _cmd_uniton(args) -> int:
    tol = args.tolerances
    op = args.op
    if op == "monodromy":
        eta = load_potential(args.potential)
        if not args.path:
            raise ConfigError("monodromy needs at least one --path", path="--path")
        recs = []
        for p in args.path:
            label, path = parse_path_arg(p)
            recs.append(uniton.monodromy(eta, path, label=label))
        _emit([r.to_json() for r in recs], args.out)
        return EXIT_OK
    fr = _frames_from_args(args)
    if op == "embed":
        mm = uniton.cartan_embed(fr, tol=tol["embed"])
        if args.csv:
            export_sphere_map(mm, args.csv)
        _emit(mm.to_json(), args.out)
    elif op == "solution":
        _emit(uniton.extended_solution(fr).to_json(), args.out)
    elif op == "number":
        _emit(uniton.uniton_number(uniton.extended_solution(fr)).to_json(), args.out)
    elif op == "dress":
        if not args.hplus:
            raise ConfigError("dress needs --hplus", path="--hplus")
        d = uniton.dress(load_loop(args.hplus), fr)
        _emit(d.to_json(), args.out)
    elif op == "dualize":
        target = load_spec(args.target)[0] if args.target else None
        _emit(uniton.dualize(fr, target).to_json(), args.out)
    elif op == "classify":
        recs = []
        for p in args.monodromy or []:
            for r in _read_json(p):
                recs.append(uniton.MonodromyRecord(
                    r["pathLabel"], np.array([complex(*l) for l in r["lambdas"]]),
                    np.array([[[complex(*x) for x in row] for row in M] for M in r["chi"]]),
                    np.array(r["deviations"]), np.array(r.get("realityResiduals", [])), r.get("mode", "potential")))
        _emit(uniton.is_finite_uniton_type(fr, recs, tol=tol["monodromy"]), args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    fr = _frames_from_args(args)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    bad = [c for c in checks if c not in verify.CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; known: {', '.join(verify.CHECKS)}", path="--checks")
    reps = verify.run_checks(fr, checks, tolerances=args.tolerances)
    _emit([r.to_json() for r in reps], args.report)
    for r in reps:
        print(f"{r.check_name}: {r.verdict} (max residual {r.max_residual:.3e})", file=sys.stderr)
    return EXIT_OK if all(r.verdict == "pass" for r in reps) else EXIT_NUMERIC


def _cmd_run(args) -> int:
    cfg_path = Path(args.config)
    obj = _read_json(cfg_path)
    cfg = parse_run_config(obj, cfg_path.parent, args.out, args.tol)
    status, summary = run_pipeline(cfg)
    if "failure" in summary:
        f = summary["failure"]
        print(f"stage {f['stage']} failed: {f['error']}; completed: {', '.join(summary['completedStages']) or 'none'}",
              file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help=f"override a tolerance ({', '.join(sorted(DEFAULT_TOLERANCES))})")
    common.add_argument("--seed", type=int, default=0, help="seed for random-suite commands")

    ap = argparse.ArgumentParser(prog="dpwloops", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factor", parents=[common], help="Birkhoff or Iwasawa splitting of a loop file")
    f.add_argument("kind", choices=["birkhoff", "iwasawa", "suite"])
    f.add_argument("loop", nargs="?", help="loop JSON (not used by 'suite')")
    f.add_argument("--spec", help="spec JSON (required for iwasawa)")
    f.add_argument("--out")
    f.add_argument("--count", type=int, default=100, help="suite size")
    f.add_argument("--eps", type=float, default=0.02, help="suite distance from the identity")
    f.set_defaults(func=_cmd_factor)

    d = sub.add_parser("dpw", help="potential to extended frames")
    dsub = d.add_subparsers(dest="op", required=True)
    dr = dsub.add_parser("run", parents=[common])
    dr.add_argument("potential")
    dr.add_argument("--grid", required=True, help="cx,cy,radius,steps | JSON | file.json")
    dr.add_argument("--mode", default="auto", choices=["auto", "exactNilpotent", "numeric"])
    dr.add_argument("--out")
    dr.set_defaults(func=_cmd_dpw)

    u = sub.add_parser("uniton", parents=[common], help="operations on frame fields")
    u.add_argument("op", choices=["embed", "solution", "number", "dress", "dualize", "monodromy", "classify"])
    u.add_argument("input", help="frames JSON (potential JSON for monodromy)")
    u.add_argument("--spec", help="spec or potential JSON describing the frames")
    u.add_argument("--basepoint", help="basepoint as a Python complex literal, e.g. 0.5+0.1j")
    u.add_argument("--hplus", help="loop JSON for dress")
    u.add_argument("--target", help="target spec JSON for dualize (default: compact)")
    u.add_argument("--path", action="append", help="circle:cx,cy,r[,vertices] or a path JSON (monodromy)")
    u.add_argument("--monodromy", action="append", help="monodromy record JSON (classify)")
    u.add_argument("--csv", help="also write the sphere map CSV (embed, n = 2)")
    u.add_argument("--out")
    u.set_defaults(func=_cmd_uniton)

    v = sub.add_parser("verify", parents=[common], help="residual checks on a frame file")
    v.add_argument("frames")
    v.add_argument("--spec")
    v.add_argument("--basepoint")
    v.add_argument("--checks", default=",".join(verify.CHECKS))
    v.add_argument("--report")
    v.set_defaults(func=_cmd_verify)

    r = sub.add_parser("run", parents=[common], help="batch pipeline from a run configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=_cmd_run)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "command", None) == "uniton":
        args.frames = args.potential = args.input
    try:
        args.tolerances = parse_tolerances(args.tol)
        return args.func(args)
    except OSError as e:
        print(f"error: I/O: {e}", file=sys.stderr)
        return EXIT_IO
    except VALIDATION_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DpwError, np.linalg.LinAlgError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
