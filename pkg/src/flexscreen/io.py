"""Files: mechanisms and reports as JSON, run configurations as YAML."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import Mechanism, OutputGrid, TypeGrid
from .primitives import CostModel, KernelFn, OuterFn, TypeDistribution, UtilityFn
from .verify import BRUTE_FORCE_TOL, OBEDIENCE_TOL, ICReport

FORMAT = "flexscreen-mechanism/1"


# ---------------------------------------------------------------------------
# mechanism files


def mechanism_to_dict(mech: Mechanism) -> dict:
    # floats survive json round trips exactly (repr is shortest round-trip)
    return {
        "format": FORMAT,
        "types": mech.types.points.tolist(),
        "outputs": mech.outputs.points.tolist(),
        "wages": mech.wages.tolist(),
        "recommendations": mech.recommendations.tolist(),
        "promised_utility": mech.promised_utility.tolist(),
    }


def mechanism_from_dict(data: dict) -> Mechanism:
    if data.get("format") != FORMAT:
        raise ValueError(f"not a mechanism file (format {data.get('format')!r})")
    try:
        return Mechanism(
            TypeGrid(np.array(data["types"], dtype=float)),
            OutputGrid(np.array(data["outputs"], dtype=float)),
            np.array(data["wages"], dtype=float),
            np.array(data["recommendations"], dtype=float),
            np.array(data["promised_utility"], dtype=float),
        )
    except KeyError as exc:
        raise ValueError(f"mechanism file lacks field {exc.args[0]!r}") from None


def save_mechanism(mech: Mechanism, path) -> None:
    Path(path).write_text(json.dumps(mechanism_to_dict(mech), indent=1) + "\n")


def load_mechanism(path) -> Mechanism:
    return mechanism_from_dict(json.loads(Path(path).read_text()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def save_report(report: ICReport, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report.as_dict()), indent=1) + "\n")


# ---------------------------------------------------------------------------
# run configuration


class ConfigError(ValueError):
    """Invalid configuration; carries the dotted field path and source line."""

    def __init__(self, message: str, field_path: str = "", line: int | None = None):
        self.field_path = field_path
        self.line = line
        where = field_path or "config"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


def _line_index(node, prefix="", out=None) -> dict:
    """Map dotted paths to 1-based source lines of a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_index(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            path = f"{prefix}.{i}"
            out[path] = value.start_mark.line + 1
            _line_index(value, path, out)
    return out


@dataclass
class RunConfig:
    utility: UtilityFn
    model: CostModel
    distribution: TypeDistribution
    outputs: OutputGrid
    types: TypeGrid
    example: object = "auto"
    v_low: float = 0.0
    wage_mode: str = "punish-off-support"
    obedience_tol: float = OBEDIENCE_TOL
    brute_force_tol: float = BRUTE_FORCE_TOL
    seed: int = 0
    output: dict = field(default_factory=dict)
    sweep: dict | None = None
    raw: dict = field(default_factory=dict, repr=False)
    lines: dict = field(default_factory=dict, repr=False)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", line=1)
    raw = copy.deepcopy(raw)
    for dotted, value in (overrides or {}).items():
        set_path(raw, dotted, value)
    return config_from_dict(raw, _line_index(node))


def set_path(raw: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def _block(raw: dict, name: str, lines: dict, required: bool = True) -> dict:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError("missing section", name)
        return {}
    if not isinstance(value, dict):
        raise ConfigError("must be a mapping", name, lines.get(name))
    return value


def _build(cls, block: dict, path: str, lines: dict, default_kind=None):
    params = dict(block)
    kind = params.pop("kind", default_kind)
    if kind is None:
        raise ConfigError("missing 'kind'", path, lines.get(path))
    try:
        return cls(kind, params)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        missing = msg.split("'")[1] if msg.startswith("missing parameter") else None
        sub = f"{path}.{missing}" if missing else path
        raise ConfigError(msg, sub, lines.get(sub, lines.get(path))) from None


def _positive(value, path, lines, integer=False, minimum=None):
    try:
        v = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", path, lines.get(path)) from None
    if integer and v != value:
        raise ConfigError(f"expected an integer, got {value!r}", path, lines.get(path))
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}", path, lines.get(path))
    if minimum is None and not v > 0:
        raise ConfigError("must be > 0", path, lines.get(path))
    return v


def config_from_dict(raw: dict, lines: dict | None = None) -> RunConfig:
    lines = lines or {}
    prim = _block(raw, "primitives", lines)
    utility = _build(UtilityFn, _block(prim, "utility", lines, required=False), "primitives.utility", lines, "linear")
    kernel = _build(KernelFn, _block(prim, "kernel", lines), "primitives.kernel", lines)
    outer = _build(OuterFn, _block(prim, "outer", lines, required=False), "primitives.outer", lines, "identity")
    dist = _build(TypeDistribution, _block(prim, "types", lines), "primitives.types", lines)
    family = prim.get("family", "composite")
    try:
        model = CostModel(kernel, outer, family)
    except ValueError as exc:
        raise ConfigError(str(exc), "primitives.family", lines.get("primitives.family")) from None

    grid = _block(raw, "grid", lines)
    out_block = _block(grid, "output", lines)
    try:
        if "points" in out_block:
            outputs = OutputGrid(np.asarray(out_block["points"], dtype=float))
        else:
            n = _positive(out_block.get("n"), "grid.output.n", lines, integer=True, minimum=2)
            lo = float(out_block.get("low", 0.0))
            hi = float(out_block.get("high", 1.0))
            outputs = OutputGrid.linspace(lo, hi, n)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "grid.output", lines.get("grid.output")) from None
    type_block = _block(grid, "types", lines)
    n_types = _positive(type_block.get("n"), "grid.types.n", lines, integer=True, minimum=2)
    try:
        types = TypeGrid.linspace(float(type_block.get("low", dist.low)), float(type_block.get("high", dist.high)), n_types)
    except ValueError as exc:
        raise ConfigError(str(exc), "grid.types", lines.get("grid.types")) from None

    solver = _block(raw, "solver", lines, required=False)
    example = solver.get("example", "auto")
    if example not in (1, 2, "auto"):
        raise ConfigError(f"expected 1, 2 or auto, got {example!r}", "solver.example", lines.get("solver.example"))
    wage_mode = solver.get("wage_mode", "punish-off-support")
    if wage_mode not in ("equality-everywhere", "punish-off-support"):
        raise ConfigError(f"unknown wage mode {wage_mode!r}", "solver.wage_mode", lines.get("solver.wage_mode"))
    tol = solver.get("tolerances") or {}
    obedience = _positive(tol.get("obedience", OBEDIENCE_TOL), "solver.tolerances.obedience", lines)
    brute = _positive(tol.get("brute_force", BRUTE_FORCE_TOL), "solver.tolerances.brute_force", lines)
    v_low = _positive(solver.get("v_low", 0.0), "solver.v_low", lines, minimum=0.0)
    seed = _positive(raw.get("seed", 0), "seed", lines, integer=True, minimum=0)

    sweep = raw.get("sweep")
    if sweep is not None and not isinstance(sweep, dict):
        raise ConfigError("must be a mapping", "sweep", lines.get("sweep"))

    return RunConfig(
        utility=utility,
        model=model,
        distribution=dist,
        outputs=outputs,
        types=types,
        example=example,
        v_low=v_low,
        wage_mode=wage_mode,
        obedience_tol=obedience,
        brute_force_tol=brute,
        seed=seed,
        output=_block(raw, "output", lines, required=False),
        sweep=sweep,
        raw=raw,
        lines=lines,
    )


def sweep_values(cfg: RunConfig) -> tuple[str, list]:
    """Parameter path and values of the sweep block."""
    sweep = cfg.sweep
    lines = cfg.lines
    if not sweep or "parameter" not in sweep:
        raise ConfigError("sweep needs 'parameter'", "sweep", lines.get("sweep"))
    param = str(sweep["parameter"])
    if "values" in sweep:
        values = [float(v) for v in sweep["values"] or []]
    else:
        try:
            start, stop = float(sweep["start"]), float(sweep["stop"])
            num = int(sweep.get("num", 0))
        except KeyError as exc:
            raise ConfigError(f"missing {exc.args[0]!r}", "sweep", lines.get("sweep")) from None
        values = np.linspace(start, stop, num).tolist() if num > 0 else []
    if not values:
        raise ConfigError("empty sweep range", "sweep", lines.get("sweep"))
    return param, values
