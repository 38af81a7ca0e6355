"""
Config-driven experiment runner and command line entry point.

A run is described by a YAML document with the sections ``run``,
``sequence``, ``system`` or ``geometry``, ``errors``, ``scan``, ``fid`` and
``output``. Unknown keys are rejected with the offending line number. Run
``spindd config-reference`` for the full schema with defaults.

Result files start with ``#``-prefixed provenance lines (tool version,
config digest, seed) followed by the body, which is a deterministic function
of the configuration.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
import yaml

from . import __version__
from .average_hamiltonian import magnus_terms, toggled_hamiltonians
from .dynamics import fid_decay_time, run_ensemble
from .exceptions import GenerationError, NumericalDriftError, ValidationError
from .sequence import PulseErrorModel, SEQUENCES, build_sequence, custom_sequence
from .spin_system import GeometrySpec, SpinSystem, build_internal_hamiltonian, realize_geometry

KINDS = ("toggling", "evolve", "compare", "scan", "fid")
SCAN_PARAMETERS = ("flip_error", "phase_error", "width", "tau", "gap45")

# section -> key -> (type check, default, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "kind": ("kind", None, "experiment kind: " + " | ".join(KINDS) + " (the subcommand overrides it)"),
        "n_cycles": ("posint", 100, "number of cycles to propagate"),
        "n_realizations": ("posint", 1, "ensemble size (geometry runs)"),
        "seed": ("int", None, "master seed; required for geometry runs"),
        "workers": ("posint", 1, "thread pool size for realizations"),
        "initial_state": ("str", "all_transverse_x", "all_transverse_x | single_qubit"),
        "initial_site": ("int", 0, "site for single_qubit"),
        "initial_bloch": ("vec3", [0.0, 1.0, 0.0], "Bloch vector for single_qubit"),
        "drift_rate": ("float", 0.0, "common linear detuning drift d(Delta)/dt"),
    },
    "sequence": {
        "name": ("str", "proposed", "proposed | cpmg | wahuha | mrev8 | free | custom"),
        "names": ("strlist", None, "sequences for compare runs"),
        "tau": ("posfloat", None, "inter-pulse delay; for 'free' the cycle length"),
        "tc_over_td": ("posfloat", None, "alternative to tau: cycle time as a fraction of the free decay time"),
        "closing_pulse": ("bool", True, "include the closing pulse of the proposed cycle"),
        "gap45": ("nonnegfloat", 0.0, "gap between coincident pulses, in units of tau"),
        "cycle_multiple": ("posfloat", None, "custom sequences: cycle length in units of tau"),
        "pulses": ("pulselist", None, "custom sequences: list of [time/tau, azimuth, angle]"),
    },
    "system": {
        "detunings": ("numlist", None, "per-spin detunings (angular units)"),
        "couplings": ("matrix", None, "symmetric coupling matrix a_ij, zero diagonal"),
        "symbolic": ("bool", False, "toggling only: use symbols Delta_i, a_ij instead of numbers"),
        "n_spins": ("posint", None, "spin count for symbolic systems"),
    },
    "geometry": {
        "mode": ("str", "box", "box | lattice"),
        "n_spins": ("posint", 4, "number of spins"),
        "size": ("posfloat", 2.0, "box side / lattice extent"),
        "min_separation": ("posfloat", 0.5, "minimum pair distance"),
        "lattice_size": ("posint", 3, "lattice sites per edge"),
        "occupancy": ("float", 0.5, "lattice site occupation probability"),
        "field_axis": ("vec3", [0.0, 0.0, 1.0], "external field direction"),
        "prefactor": ("float", 1.0, "coupling prefactor (absorbs gamma^2 hbar^2 / 4 and units)"),
        "detuning_mean": ("float", 0.0, "mean of the normal detuning distribution"),
        "detuning_std": ("nonnegfloat", 1.0, "std of the normal detuning distribution"),
        "detunings": ("numlist", None, "explicit detunings instead of sampling"),
        "dipolar_angle_power": ("anglepower", 2, "2: (1 - 3cos^2), 1: literal (1 - 3cos) variant"),
    },
    "errors": {
        "flip_error": ("float", 0.0, "fractional flip-angle error"),
        "phase_error": ("float", 0.0, "pulse phase offset (rad)"),
        "width": ("nonnegfloat", 0.0, "pulse width t_p (0 = delta pulses)"),
        "include_internal": ("bool", False, "evolve under H_in during finite pulses"),
    },
    "scan": {
        "parameter": ("scanparam", None, " | ".join(SCAN_PARAMETERS)),
        "values": ("numlist", None, "grid values"),
    },
    "fid": {
        "horizon": ("posfloat", None, "longest time searched (default 1000/||H_in||)"),
        "resolution": ("posfloat", None, "sampling step (default 0.01/||H_in||)"),
    },
    "output": {
        "path": ("str", "-", "output file, '-' for stdout"),
        "format": ("format", "csv", "csv | structured (json)"),
    },
}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-3`` style exponents as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[0-9][0-9_]*[eE][-+]?[0-9]+
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class ConfigError(ValidationError):
    """Configuration rejected; message names the key and line."""


@dataclass
class RunConfig:
    kind: str
    sections: dict
    lines: dict = field(default_factory=dict, repr=False)

    def get(self, section: str, key: str):
        return self.sections.get(section, {}).get(key, SCHEMA[section][key][1])

    def has(self, section: str) -> bool:
        return section in self.sections

    @property
    def seed(self):
        return self.get("run", "seed")

    def digest(self) -> str:
        """Hash of everything that determines the result (output options excluded)."""
        body = {k: v for k, v in self.sections.items() if k != "output"}
        blob = json.dumps({"kind": self.kind, **body}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing

def _key_lines(text: str) -> dict:
    lines = {}
    node = yaml.compose(text, Loader=_Loader)
    if not isinstance(node, yaml.MappingNode):
        return lines
    for knode, vnode in node.value:
        lines[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(knode.value, k2.value)] = k2.start_mark.line + 1
    return lines


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(kind: str, v) -> str | None:
    """Return an error message, or None when ``v`` is acceptable."""
    if v is None:
        return None
    ok = {
        "kind": lambda: v in KINDS,
        "int": lambda: isinstance(v, int) and not isinstance(v, bool),
        "posint": lambda: isinstance(v, int) and not isinstance(v, bool) and v >= 1,
        "float": lambda: _is_num(v) and math.isfinite(v),
        "posfloat": lambda: _is_num(v) and math.isfinite(v) and v > 0,
        "nonnegfloat": lambda: _is_num(v) and math.isfinite(v) and v >= 0,
        "bool": lambda: isinstance(v, bool),
        "str": lambda: isinstance(v, str),
        "strlist": lambda: isinstance(v, list) and all(isinstance(x, str) for x in v) and v,
        "numlist": lambda: isinstance(v, list) and all(_is_num(x) for x in v) and v,
        "vec3": lambda: isinstance(v, list) and len(v) == 3 and all(_is_num(x) for x in v),
        "matrix": lambda: isinstance(v, list) and all(
            isinstance(r, list) and all(_is_num(x) for x in r) for r in v),
        "pulselist": lambda: isinstance(v, list) and all(
            isinstance(p, list) and len(p) == 3 and all(_is_num(x) for x in p) for p in v),
        "anglepower": lambda: v in (1, 2) and not isinstance(v, bool),
        "scanparam": lambda: v in SCAN_PARAMETERS,
        "format": lambda: v in ("csv", "structured", "json"),
    }[kind]()
    if ok:
        return None
    hints = {
        "posfloat": "must be a number > 0",
        "nonnegfloat": "must be a number >= 0",
        "posint": "must be an integer >= 1",
        "anglepower": "allowed values: 1, 2",
        "kind": f"allowed values: {', '.join(KINDS)}",
        "scanparam": f"allowed values: {', '.join(SCAN_PARAMETERS)}",
        "format": "allowed values: csv, structured",
        "vec3": "must be a list of 3 numbers",
        "pulselist": "must be a list of [time, azimuth, angle] triples",
    }
    return hints.get(kind, f"has the wrong type (expected {kind})")


def parse_config(text: str, kind: str | None = None) -> RunConfig:
    """Validate a YAML run configuration; ``kind`` overrides ``run.kind``."""
    try:
        data = yaml.load(text, Loader=_Loader)
        lines = _key_lines(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")

    def where(*path):
        ln = lines.get(tuple(path))
        return f" (line {ln})" if ln else ""

    sections = {}
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section '{sec}'{where(sec)}; allowed: {', '.join(SCHEMA)}")
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"section '{sec}'{where(sec)} must be a mapping")
        for key, val in body.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{sec}.{key}'{where(sec, key)}")
            msg = _check_value(SCHEMA[sec][key][0], val)
            if msg:
                raise ConfigError(f"invalid value for '{key}' ({sec}.{key}){where(sec, key)}: {val!r} {msg}")
        sections[sec] = dict(body)

    kind = kind or sections.get("run", {}).get("kind")
    if kind is None:
        raise ConfigError("missing required key 'run.kind' (or give a subcommand)")
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    cfg = RunConfig(kind, sections, lines)
    _cross_validate(cfg, where)
    return cfg


def _cross_validate(cfg: RunConfig, where):
    if cfg.has("system") == cfg.has("geometry"):
        raise ConfigError("exactly one of the sections 'system' or 'geometry' is required")
    if cfg.has("system"):
        sym = cfg.get("system", "symbolic")
        if sym:
            if cfg.kind != "toggling":
                raise ConfigError("system.symbolic is only valid for toggling runs")
            if cfg.get("system", "n_spins") is None:
                raise ConfigError("missing required key 'system.n_spins' for a symbolic system")
        else:
            if cfg.get("system", "detunings") is None:
                raise ConfigError(f"missing required key 'system.detunings'{where('system')}")
            if cfg.get("run", "n_realizations") != 1:
                raise ConfigError("an explicit system runs a single realization; use 'geometry' for ensembles")
    elif cfg.seed is None:
        raise ConfigError("missing required key 'run.seed' (mandatory for geometry ensembles)")

    seq_names = cfg.get("sequence", "names") if cfg.kind == "compare" else [cfg.get("sequence", "name")]
    if seq_names is None:
        raise ConfigError("missing required key 'sequence.names' for compare runs")
    for name in seq_names:
        if name not in SEQUENCES and name != "custom":
            raise ConfigError(f"unknown sequence '{name}'{where('sequence', 'name')}")
        if name == "custom" and (cfg.get("sequence", "pulses") is None
                                 or cfg.get("sequence", "cycle_multiple") is None):
            raise ConfigError("custom sequences need 'sequence.pulses' and 'sequence.cycle_multiple'")
    tau, rel = cfg.get("sequence", "tau"), cfg.get("sequence", "tc_over_td")
    if cfg.kind != "fid":
        if (tau is None) == (rel is None):
            raise ConfigError(f"give exactly one of 'sequence.tau' or 'sequence.tc_over_td'{where('sequence')}")
        if cfg.kind == "toggling" and rel is not None:
            raise ConfigError("toggling runs need an explicit 'sequence.tau'")
    if cfg.kind == "scan":
        if cfg.get("scan", "parameter") is None or cfg.get("scan", "values") is None:
            raise ConfigError("scan runs need 'scan.parameter' and 'scan.values'")
        if cfg.get("scan", "parameter") == "tau":
            if rel is not None:
                raise ConfigError("a tau scan cannot be combined with 'sequence.tc_over_td'")
            if any(v <= 0 for v in cfg.get("scan", "values")):
                raise ConfigError("invalid value for 'tau' in scan.values: must be > 0")
    init = cfg.get("run", "initial_state")
    if init not in ("all_transverse_x", "single_qubit"):
        raise ConfigError(f"invalid value for 'initial_state'{where('run', 'initial_state')}: {init!r}")


def config_reference() -> str:
    """Generated reference of every config key with its default."""
    out = ["# spindd configuration reference", ""]
    for sec, keys in SCHEMA.items():
        out.append(f"{sec}:")
        for key, (_, default, desc) in keys.items():
            d = "null" if default is None else json.dumps(default)
            out.append(f"  {key}: {d}    # {desc}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# building blocks from a config

def _geometry(cfg: RunConfig) -> GeometrySpec:
    g = {k: cfg.get("geometry", k) for k in SCHEMA["geometry"]}
    return GeometrySpec(
        n_spins=g["n_spins"], seed=cfg.seed, mode=g["mode"], size=g["size"],
        min_separation=g["min_separation"], lattice_size=g["lattice_size"],
        occupancy=g["occupancy"], field_axis=tuple(g["field_axis"]), prefactor=g["prefactor"],
        detuning_mean=g["detuning_mean"], detuning_std=g["detuning_std"],
        detunings=tuple(g["detunings"]) if g["detunings"] is not None else None,
        angle_power=g["dipolar_angle_power"],
    )


def _system(cfg: RunConfig) -> SpinSystem:
    if cfg.get("system", "symbolic"):
        return SpinSystem.symbolic(cfg.get("system", "n_spins"))
    det = cfg.get("system", "detunings")
    cpl = cfg.get("system", "couplings")
    if cpl is None:
        cpl = [[0] * len(det) for _ in det]
    return SpinSystem(tuple(det), cpl, {"source": "config"})


def _source(cfg: RunConfig):
    return _system(cfg) if cfg.has("system") else _geometry(cfg)


def _sequence(cfg: RunConfig, name: str, tau: float | None = None):
    tau = tau if tau is not None else (cfg.get("sequence", "tau") or 1.0)
    if name == "custom":
        return custom_sequence(tau, cfg.get("sequence", "cycle_multiple"), cfg.get("sequence", "pulses"))
    if name == "proposed":
        return build_sequence(name, tau, closing_pulse=cfg.get("sequence", "closing_pulse"))
    return build_sequence(name, tau)


def _errors(cfg: RunConfig, **override) -> PulseErrorModel:
    kw = {k: cfg.get("errors", k) for k in SCHEMA["errors"]}
    kw.update(override)
    return PulseErrorModel(kw["flip_error"], kw["phase_error"], kw["width"], kw["include_internal"])


def _state_kwargs(cfg: RunConfig) -> dict:
    if cfg.get("run", "initial_state") == "single_qubit":
        return {"site": cfg.get("run", "initial_site"), "bloch": tuple(cfg.get("run", "initial_bloch"))}
    return {}


def _ensemble(cfg: RunConfig, seq, errors=None, gap45=None, n_cycles=None):
    return run_ensemble(
        _source(cfg), seq, errors or _errors(cfg),
        n_realizations=cfg.get("run", "n_realizations"),
        n_cycles=n_cycles or cfg.get("run", "n_cycles"),
        tc_over_td=cfg.get("sequence", "tc_over_td"),
        initial=cfg.get("run", "initial_state"),
        state_kwargs=_state_kwargs(cfg),
        gap45=cfg.get("sequence", "gap45") if gap45 is None else gap45,
        drift_rate=cfg.get("run", "drift_rate"),
        workers=cfg.get("run", "workers"),
    )


# ---------------------------------------------------------------------------
# running

COLUMNS = ["time", "realization", "fidelity", "mx", "my", "mz"]


@dataclass
class ResultFile:
    header: dict
    columns: list
    rows: list
    extra: dict = field(default_factory=dict)
    text_body: str | None = None

    def render(self, fmt: str = "csv") -> str:
        head = "".join(f"# {k}: {v}\n" for k, v in self.header.items())
        return head + self.body(fmt)

    def body(self, fmt: str = "csv") -> str:
        if fmt in ("structured", "json"):
            payload = {"columns": self.columns, "rows": self.rows, **self.extra}
            return json.dumps(payload, indent=1, default=_json_default) + "\n"
        if self.text_body is not None:
            return self.text_body
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_cell(v) for v in row) + "\n")
        return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "exceeds_horizon"
        return repr(v)
    return str(v)


def _json_default(o):
    return str(o)


def _series_rows(res, prefix=()):
    rows = []
    for r in range(res.n_realizations):
        if res.failed[r]:
            continue
        for k in range(res.times.shape[1]):
            rows.append([*prefix, float(res.times[r, k]), r, float(res.fidelity[r, k]),
                         float(res.mx[r, k]), float(res.my[r, k]), float(res.mz[r, k])])
    return rows


def _run_toggling(cfg: RunConfig, header: dict) -> ResultFile:
    src = _source(cfg)
    system = src if isinstance(src, SpinSystem) else realize_geometry(src, 0)
    seq = _sequence(cfg, cfg.get("sequence", "name"))
    h = build_internal_hamiltonian(system)
    frame = toggled_hamiltonians(seq, h)
    terms = magnus_terms(frame)
    lines = []
    segs = []
    for k, (d, hk) in enumerate(frame.segments, 1):
        lines.append(f"[segment {k}] duration = {d}")
        lines.append(hk.to_text())
        segs.append({"duration": str(d), "hamiltonian": hk.to_text().splitlines()})
    lines += ["[zeroth_average]", terms.zeroth.to_text(), "[first_magnus]", terms.first.to_text()]
    extra = {
        "internal_hamiltonian": h.to_text().splitlines(),
        "segments": segs,
        "zeroth_average": terms.zeroth.to_text().splitlines(),
        "first_magnus": terms.first.to_text().splitlines(),
    }
    return ResultFile(header, [], [], extra, "\n".join(lines) + "\n")


def _run_evolve(cfg, header):
    res = _ensemble(cfg, _sequence(cfg, cfg.get("sequence", "name")))
    return ResultFile(header, COLUMNS, _series_rows(res),
                      {"decay_times": res.decay_times.tolist(), "failed": res.failed.tolist()})


def _run_compare(cfg, header):
    rows = []
    extra = {}
    for name in cfg.get("sequence", "names"):
        res = _ensemble(cfg, _sequence(cfg, name))
        rows += _series_rows(res, (name,))
        extra[name] = {"mean_fidelity": res.mean().tolist()}
    return ResultFile(header, ["sequence"] + COLUMNS, rows, extra)


def _run_scan(cfg, header):
    param = cfg.get("scan", "parameter")
    name = cfg.get("sequence", "name")
    base = _sequence(cfg, name)
    total_time = cfg.get("run", "n_cycles") * base.cycle_time
    rows = []
    means = []
    for v in cfg.get("scan", "values"):
        seq, errors, gap, n_cycles = base, None, None, None
        if param == "tau":
            seq = _sequence(cfg, name, tau=float(v))
            n_cycles = max(1, round(total_time / seq.cycle_time))
        elif param == "gap45":
            gap = float(v)
        else:
            errors = _errors(cfg, **{param: float(v)})
        res = _ensemble(cfg, seq, errors=errors, gap45=gap, n_cycles=n_cycles)
        last = _series_rows(res, (param, v))
        n = res.times.shape[1]
        rows += [row for i, row in enumerate(last) if i % n == n - 1]
        means.append(float(res.mean()[-1]))
    return ResultFile(header, ["parameter", "value"] + COLUMNS, rows,
                      {"values": cfg.get("scan", "values"), "mean_final_fidelity": means})


def _run_fid(cfg, header):
    src = _source(cfg)
    n = 1 if isinstance(src, SpinSystem) else cfg.get("run", "n_realizations")
    rows = []
    for r in range(n):
        system = src if isinstance(src, SpinSystem) else realize_geometry(src, r)
        td = fid_decay_time(system, cfg.get("fid", "resolution"), cfg.get("fid", "horizon"))
        rows.append([r, math.inf if td is None else td])
    return ResultFile(header, ["realization", "t_d"], rows)


_RUNNERS = {
    "toggling": _run_toggling,
    "evolve": _run_evolve,
    "compare": _run_compare,
    "scan": _run_scan,
    "fid": _run_fid,
}


def run(cfg: RunConfig) -> ResultFile:
    header = {
        "tool": f"spindd {__version__}",
        "kind": cfg.kind,
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
    }
    return _RUNNERS[cfg.kind](cfg, header)


# ---------------------------------------------------------------------------
# CLI

def _diag(msg: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return f"error: {msg}"
    return f"\033[31merror:\033[0m {msg}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spindd", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spindd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override output.path ('-' for stdout)")
        p.add_argument("--format", choices=["csv", "structured", "json"], help="override output.format")
    sub.add_parser("config-reference", help="print every config key with its default")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config-reference":
        print(config_reference())
        return 0
    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text, kind=args.command)
        if args.seed is not None:
            cfg.sections.setdefault("run", {})["seed"] = args.seed
        if args.out is not None:
            cfg.sections.setdefault("output", {})["path"] = args.out
        if args.format is not None:
            cfg.sections.setdefault("output", {})["format"] = args.format
    except (OSError, ValidationError, ValueError) as exc:
        print(_diag(str(exc)), file=sys.stderr)
        return 1
    try:
        result = run(cfg)
    except (ValidationError, ValueError) as exc:
        print(_diag(f"{cfg.kind}: {exc}"), file=sys.stderr)
        return 1
    except (GenerationError, NumericalDriftError, ArithmeticError, RuntimeError) as exc:
        print(_diag(f"{cfg.kind}: {exc}"), file=sys.stderr)
        return 2
    text = result.render(cfg.get("output", "format"))
    path = cfg.get("output", "path")
    if path == "-":
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); not an error for us
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    else:
        with open(path, "w") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
