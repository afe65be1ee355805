"""Command line driver: ``bulkedge <command> --config cfg.json --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import tempfile
import time
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, ValidationError, ValidationInfo,
                      field_validator, model_validator)

from . import __version__
from .bands import BZGrid, check_gap, compute_bands, crossing_diagnostic
from .conductivity import (BoxOperator, SwitchFunctions, WindowSpec, certified_half_gap,
                           as_matrix_model, conductivity_convergence, windowed_conductivity)
from .edge import (EdgeParams, StripOperator, StageError, edge_index, floquet_spectrum,
                   spectral_flow, verify_bec, window_half_width)
from .effective import ContourSpec, TwoLevelSymbol, index_J_contour, index_J_residue
from .models import (AppendixModel, ContinuousModel, JunctionFamily, MatrixModel, barrier_model,
                     continuous_barrier, default_junction, free_laplacian, random_two_band)
from .topology import berry_chern, curvature_field, lattice_chern, projector_field

log = logging.getLogger("bulkedge")

COMMANDS = ("bands", "chern", "edge-spectrum", "spectral-flow", "conductivity",
            "effective-index", "verify", "crossing-diagnostic")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AppendixSpec(_Strict):
    type: Literal["appendix"]
    epsilon: float = Field(0.3, gt=0)
    nu: int = 1


class BarrierSpec(_Strict):
    type: Literal["barrier"]
    dim: int = Field(2, ge=1)
    c: Optional[float] = None


class HoppingSpec(_Strict):
    r: tuple[int, int]
    re: list[list[float]]
    im: Optional[list[list[float]]] = None


class MatrixSpec(_Strict):
    type: Literal["matrix"]
    hoppings: list[HoppingSpec] = Field(min_length=1)


class RandomSpec(_Strict):
    type: Literal["random_two_band"]
    seed: int = 0
    min_gap: float = Field(0.4, gt=0)


class FourierTerm(_Strict):
    k: tuple[int, int]
    re: float = 0.0
    im: float = 0.0


class ContinuousSpec(_Strict):
    type: Literal["continuous"]
    kind: Literal["magnetic-schrodinger", "divergence-form", "general-second-order"]
    coeffs: dict[str, list[FourierTerm]] = Field(default_factory=dict)


class FreeLaplacianSpec(_Strict):
    type: Literal["free_laplacian"]


class ContinuousBarrierSpec(_Strict):
    type: Literal["continuous_barrier"]


MODEL_TYPES = ("appendix", "barrier", "matrix", "random_two_band", "continuous",
               "free_laplacian", "continuous_barrier")

ModelSpec = Annotated[Union[AppendixSpec, BarrierSpec, MatrixSpec, RandomSpec, ContinuousSpec,
                            FreeLaplacianSpec, ContinuousBarrierSpec], Field(discriminator="type")]


class ContourCfg(_Strict):
    center: float
    radius: float = Field(gt=0)
    nodes: int = Field(64, ge=8)


class CrossingCfg(_Strict):
    n: int = Field(1, ge=1)
    delta: float = Field(0.0, ge=0)
    x2: list[float] = Field(default_factory=lambda: [-3.0, -2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0])


class ExperimentConfig(_Strict):
    model: Optional[ModelSpec] = None
    minus: Optional[ModelSpec] = None
    plus: Optional[ModelSpec] = None
    barrier: Optional[ModelSpec] = None
    lam0: float = 0.0
    eps: Optional[float] = Field(None, gt=0)
    grid: tuple[int, int] = (24, 24)
    K: Optional[int] = Field(None, ge=0)
    chern_method: Literal["lattice", "berry", "both"] = "both"
    width: int = Field(40, ge=4)
    zeta_nodes: int = Field(200, ge=2)
    window: Optional[float] = Field(None, gt=0)
    loc_threshold: float = Field(0.5, gt=0, lt=1)
    max_nodes: int = Field(4000, ge=2)
    lam1: float = -1.0
    lam2: float = 1.0
    contour: Optional[ContourCfg] = None
    box: tuple[int, int] = (48, 40)
    box_sizes: Optional[list[tuple[int, int]]] = None
    margin: int = Field(8, ge=0)
    ell: Optional[float] = Field(None, gt=0)
    r1_max: int = Field(12, ge=1)
    crossing: CrossingCfg = Field(default_factory=CrossingCfg)
    seed: int = 0
    out: Optional[str] = None

    @field_validator("model", "minus", "plus", "barrier", mode="before")
    @classmethod
    def _load_file(cls, v, info: ValidationInfo):
        """A string is a path (relative to the config file) to a model JSON."""
        if not isinstance(v, str):
            return v
        base = Path((info.context or {}).get("base", "."))
        path = Path(v) if Path(v).is_absolute() else base / v
        if not path.is_file():
            raise ValueError(f"model file {v!r} not found")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON in model file {v!r}: {exc}") from exc

    @model_validator(mode="after")
    def _ranges(self):
        if min(self.grid) < 4:
            raise ValueError("grid: both sizes must be >= 4")
        if not self.lam1 < self.lam0 < self.lam2:
            raise ValueError("need lam1 < lam0 < lam2")
        for L1, L2 in [self.box] + list(self.box_sizes or []):
            if L1 < 4 or L2 < 2:
                raise ValueError(f"box ({L1}, {L2}) is too small")
            if not self.margin < min(L1, 2 * L2 + 1) / 3:
                raise ValueError(f"margin {self.margin} must be < min(L1, 2 L2 + 1) / 3 for box ({L1}, {L2})")
            if self.ell is not None and self.ell > L1 / 4:
                raise ValueError(f"ell {self.ell:g} exceeds L1 / 4 for box ({L1}, {L2})")
        return self


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        parts = [str(p) for p in e["loc"]]
        # drop the discriminator tag pydantic inserts for tagged unions
        if len(parts) >= 2 and parts[0] in ("model", "minus", "plus", "barrier"):
            parts = [parts[0]] + parts[2:] if parts[1] in MODEL_TYPES else parts
        path = ".".join(parts) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def _model_from_spec(spec, field_name: str, lam0: float):
    t = spec.type
    if t == "appendix":
        return AppendixModel(spec.epsilon, spec.nu)
    if t == "barrier":
        return barrier_model(spec.dim, lam0, spec.c)
    if t == "matrix":
        hops = {}
        for h in spec.hoppings:
            T = np.asarray(h.re, dtype=complex)
            if h.im is not None:
                T = T + 1j * np.asarray(h.im, dtype=float)
            hops[tuple(h.r)] = T
        return MatrixModel(hops)
    if t == "random_two_band":
        return random_two_band(np.random.default_rng(spec.seed), spec.min_gap)
    if t == "continuous":
        coeffs = {name: {tuple(term.k): complex(term.re, term.im) for term in terms}
                  for name, terms in spec.coeffs.items()}
        return ContinuousModel(spec.kind, coeffs)
    if t == "free_laplacian":
        return free_laplacian()
    if t == "continuous_barrier":
        return continuous_barrier(lam0)
    raise ConfigError(f"{field_name}: unknown model type {t!r}")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


class Run:
    """Collects the files one command writes (name -> text)."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def text(self, name: str, content: str) -> None:
        self.files[name] = content

    def json(self, name: str, obj) -> None:
        self.text(name, dumps(obj))

    def csv_from(self, name: str, writer) -> None:
        with tempfile.TemporaryDirectory() as d:
            tmp = Path(d) / name
            writer(tmp)
            self.files[name] = tmp.read_text()

    def flush(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        for name, content in sorted(self.files.items()):
            (self.out / name).write_text(content)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def config_hash(command: str, resolved: dict) -> str:
    payload = json.dumps({"command": command, "config": resolved, "version": __version__},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def cache_lookup(out: Path, key: str) -> dict | None:
    path = out / ".cache" / f"{key}.json"
    if not path.is_file():
        return None
    try:
        rec = json.loads(path.read_text())
        if rec.get("config_hash") != key or not isinstance(rec.get("outputs"), dict):
            raise ValueError("record does not match its key")
        return rec
    except (ValueError, OSError) as exc:
        log.warning("ignoring corrupt cache record %s (%s)", path.name, exc)
        return None


def cache_store(out: Path, key: str, command: str, files: dict, started: float) -> None:
    rec = {"config_hash": key, "command": command, "tool_version": __version__,
           "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
           "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
           "outputs": files}
    d = out / ".cache"
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{key}.json").write_text(json.dumps(rec, sort_keys=True, indent=1))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


class Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    def model(self, name: str):
        spec = getattr(self.cfg, name)
        if spec is None:
            raise ConfigError(f"{name}: required by this command")
        try:
            return _model_from_spec(spec, name, self.cfg.lam0)
        except ConfigError:
            raise
        except (ValueError, RuntimeError) as exc:
            raise ConfigError(f"{name}: {exc}") from exc

    @property
    def grid(self) -> BZGrid:
        return BZGrid(*self.cfg.grid)

    def junction(self) -> JunctionFamily:
        minus, plus = self.model("minus"), self.model("plus")
        jf = default_junction(minus, plus, self.cfg.lam0)
        if self.cfg.barrier is not None:
            jf = JunctionFamily(minus, plus, self.model("barrier"))
        return jf

    def edge_params(self) -> EdgeParams:
        c = self.cfg
        return EdgeParams(W=c.width, n_zeta=c.zeta_nodes, half_width=c.window,
                          theta=c.loc_threshold, grid=c.grid[0], max_nodes=c.max_nodes)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, ConfigError):
        raise
    except Exception as exc:  # noqa: BLE001 - tagged for exit code 3
        raise StageError(name, exc) from exc


def cmd_bands(ctx: Context, run: Run) -> dict:
    m = ctx.model("model")
    b = _stage("bands", compute_bands, m, ctx.grid, ctx.cfg.K)
    run.csv_from("bands.csv", b.to_csv)
    eps = ctx.cfg.eps or 0.0
    rep = _stage("gap", check_gap, b, ctx.cfg.lam0, eps)
    summary = {"grid": list(ctx.cfg.grid), "nbands": b.nbands, "truncation": b.truncation,
               "min_eigenvalue": float(b.eigenvalues.min()), "gap": rep.to_json()}
    run.json("bands.json", summary)
    return summary


def cmd_chern(ctx: Context, run: Run) -> dict:
    m = ctx.model("model")
    p = _stage("projector", projector_field, m, ctx.grid, ctx.cfg.lam0, ctx.cfg.K)
    out: dict[str, Any] = {"grid": list(ctx.cfg.grid), "rank": p.rank}
    if ctx.cfg.chern_method in ("lattice", "both"):
        out["lattice"] = _stage("lattice_chern", lattice_chern, p).to_json()
    if ctx.cfg.chern_method in ("berry", "both"):
        out["berry"] = _stage("berry_chern", berry_chern, p).to_json()
        run.csv_from("curvature.csv", _stage("curvature", curvature_field, p).to_csv)
    if "lattice" in out and "berry" in out:
        out["agree"] = out["lattice"]["value"] == out["berry"]["value"]
    run.json("chern.json", out)
    return out


def _floquet(ctx: Context):
    jf = ctx.junction()
    c = ctx.cfg
    w = c.window or _stage("gap", window_half_width, [jf.minus, jf.plus], c.lam0)
    strip = _stage("strip", StripOperator, jf, c.width)
    fs = _stage("floquet", floquet_spectrum, strip, c.zeta_nodes, c.lam0, w,
                max_nodes=c.max_nodes, theta=c.loc_threshold)
    return fs, w


def cmd_edge_spectrum(ctx: Context, run: Run) -> dict:
    fs, w = _floquet(ctx)
    run.csv_from("floquet.csv", fs.to_csv)
    out = {"window": [ctx.cfg.lam0 - w, ctx.cfg.lam0 + w], "zeta_nodes": int(fs.zeta.size),
           "converged": fs.converged, "periodicity_error": fs.periodicity_error,
           "unresolved": [list(u) for u in fs.unresolved]}
    run.json("edge-spectrum.json", out)
    return out


def cmd_spectral_flow(ctx: Context, run: Run) -> dict:
    fs, w = _floquet(ctx)
    sf = _stage("spectral_flow", spectral_flow, fs, theta=ctx.cfg.loc_threshold)
    raw = _stage("spectral_flow", spectral_flow, fs, theta=ctx.cfg.loc_threshold, filtered=False)
    out = {"filtered": sf.to_json(), "unfiltered_flow": raw.flow, "edge_index": edge_index(sf),
           "window": [ctx.cfg.lam0 - w, ctx.cfg.lam0 + w], "zeta_nodes": int(fs.zeta.size)}
    run.csv_from("floquet.csv", fs.to_csv)
    run.json("spectral-flow.json", out)
    return out


def cmd_conductivity(ctx: Context, run: Run) -> dict:
    c = ctx.cfg
    jf = ctx.junction()
    mats = [as_matrix_model(m, c.r1_max) for m in (jf.minus, jf.plus)]
    eps = c.eps or 0.5 * _stage("gap", certified_half_gap, mats, c.lam0)
    L1, L2 = c.box
    ell = c.ell or L1 / 8
    sw = SwitchFunctions(c.lam0, eps, ell)
    box = _stage("box", BoxOperator, jf, L1, L2, c.r1_max)
    res = _stage("conductivity", windowed_conductivity, box, sw, WindowSpec(c.margin))
    out = res.to_json()
    out.update({"eps": eps, "ell": ell})
    if c.box_sizes:
        tab = _stage("convergence", conductivity_convergence, jf, c.box_sizes, sw, c.margin,
                     ell_fraction=ell / L1)
        run.csv_from("convergence.csv", tab.to_csv)
        out["convergence"] = tab.to_json()
    run.json("conductivity.json", out)
    return out


def cmd_effective_index(ctx: Context, run: Run) -> dict:
    c = ctx.cfg
    m = ctx.model("model")
    p = _stage("projector", projector_field, m, ctx.grid, c.lam0, c.K)
    if p.equivariant:
        raise StageError("effective_index", ValueError("plane-wave fields need a reduced frame"))
    t = TwoLevelSymbol(p, c.lam1, c.lam2)
    contour = (ContourSpec(c.contour.center, c.contour.radius, c.contour.nodes)
               if c.contour else ContourSpec.default(c.lam1, c.lam2))
    rc = _stage("index_J_contour", index_J_contour, t, contour)
    rr = _stage("index_J_residue", index_J_residue, t)
    lc = _stage("lattice_chern", lattice_chern, p)
    out = {"contour": rc.to_json(), "residue": rr.to_json(), "lattice_chern": lc.value,
           "contour_residue_gap": float(abs(rc.J - rr.J)),
           "match": rc.chern == lc.value == rr.chern}
    run.json("effective-index.json", out)
    return out


def cmd_verify(ctx: Context, run: Run) -> dict:
    minus, plus = ctx.model("minus"), ctx.model("plus")
    rep = verify_bec(minus, plus, ctx.cfg.lam0, ctx.edge_params())
    run.json("verify.json", rep)
    return rep


def cmd_crossing(ctx: Context, run: Run) -> dict:
    c = ctx.cfg
    jf = ctx.junction()
    diag = _stage("crossing", crossing_diagnostic, jf, c.crossing.n, c.crossing.delta,
                  c.crossing.x2, ctx.grid, c.K)
    out = diag.to_json()
    run.json("crossing.json", out)
    return out


HANDLERS = {"bands": cmd_bands, "chern": cmd_chern, "edge-spectrum": cmd_edge_spectrum,
            "spectral-flow": cmd_spectral_flow, "conductivity": cmd_conductivity,
            "effective-index": cmd_effective_index, "verify": cmd_verify,
            "crossing-diagnostic": cmd_crossing}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bulkedge", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--out", type=Path, help="output directory (default: config 'out' or ./results)")
    p.add_argument("--force", action="store_true", help="recompute even if a cached record exists")
    p.add_argument("--threads", type=int, default=None, help="BLAS/LAPACK thread limit")
    p.add_argument("--width", type=int, help="strip half-width W")
    p.add_argument("--zeta-nodes", type=int, help="initial zeta grid size")
    p.add_argument("--window", type=float, help="energy window half-width around lam0")
    p.add_argument("--loc-threshold", type=float, help="interface localization threshold")
    p.add_argument("--box", type=int, nargs=2, metavar=("L1", "L2"), help="conductivity box")
    p.add_argument("--margin", type=int, help="window margin in sites")
    p.add_argument("--ell", type=float, help="half-width of the f switch")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_OVERRIDES = {"width": "width", "zeta_nodes": "zeta_nodes", "window": "window",
              "loc_threshold": "loc_threshold", "box": "box", "margin": "margin", "ell": "ell"}


def load_config(args) -> ExperimentConfig:
    raw: dict = {}
    base = Path.cwd()
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"--config: file {str(args.config)!r} not found")
        try:
            raw = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<root>: configuration must be a JSON object")
        base = args.config.resolve().parent
    for attr, key in _OVERRIDES.items():
        val = getattr(args, attr)
        if val is not None:
            raw[key] = val
    try:
        cfg = ExperimentConfig.model_validate(raw, context={"base": base})
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc
    return cfg


def _limit_threads(n: int | None):
    if n is None:
        from contextlib import nullcontext
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        out = args.out or (Path(cfg.out) if cfg.out else Path("results"))
        resolved = cfg.model_dump(mode="json", exclude={"out"})
        key = config_hash(args.command, resolved)
        ctx = Context(cfg)
        rec = None if args.force else cache_lookup(out, key)
        if rec is not None:
            log.info("cache hit %s", key[:12])
            r = Run(out)
            r.files = dict(rec["outputs"])
            r.flush()
            main_name = sorted(n for n in r.files if n.endswith(".json"))
            sys.stdout.write(r.files[main_name[0]] if main_name else "")
            return 0
        started = time.time()
        r = Run(out)
        with _limit_threads(args.threads):
            result = HANDLERS[args.command](ctx, r)
        r.flush()
        cache_store(out, key, args.command, r.files, started)
        sys.stdout.write(dumps(result))
        if args.command == "verify":
            print(f"match: {result['match']}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"numerical error {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
