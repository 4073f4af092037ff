"""Run configuration: TOML sections [geometry] [physics] [time] [initial] [run].

Any key may also be written at the top level (``mode = "cell"``); it is moved
into the section that owns it. Missing keys take the documented defaults.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .cell import INDEX_CONVENTIONS, V_RATE_CONVENTIONS
from .coefficients import (MollifierConfig, PhysicalParams, ScalarFieldSpec, SmoluchowskiParams,
                           TensorFieldSpec, constant, iso, laminate, trig)
from .errors import GeometryError, ParseError, ValidationError
from .expressions import Expression
from .geometry import FACES, CellGeometry, build_cell_geometry, _unit_fraction
from .micro import DEFAULT_THETA, DEFAULT_U, InitialData

MODES = ("cell", "micro", "macro", "correct", "check")

DEFAULTS = {
    "geometry": {
        "hole_lo": [0.25, 0.25],
        "hole_hi": [0.75, 0.75],
        "robin_faces": ["top", "right"],
        "epsilon": 0.25,
        "eps_list": [0.25, 0.125, 0.0625],
        "n_per_cell": 16,
        "cell_n": None,
    },
    "physics": {
        "N": 3,
        "beta": 1.0,
        "delta": 0.1,
        "kappa": {"kind": "trig", "a": 2.0, "b": 1.0},
        "tau": {"kind": "constant", "value": 0.1},
        "d": {"kind": "trig", "a": 1.5, "b": 0.5},
        "rho": {"kind": "constant", "value": 0.1},
        "g0": {"kind": "constant", "value": 1.0},
        "a": {"kind": "constant", "value": 1.0},
        "b": {"kind": "constant", "value": 1.0},
        "index_convention": "symmetric",
        "v_rates": "surface",
    },
    "time": {
        "t_end": 0.1,
        "dt": None,
        "dt_factor": 0.25,
        "snapshots": 11,
        "tol": 1e-10,
    },
    "initial": {
        "theta": DEFAULT_THETA,
        "u": list(DEFAULT_U),
        "v": [0.0, 0.0, 0.0],
        "well_prepared": True,
        "ill_exponent": 0.25,
    },
    "run": {
        "mode": "cell",
        "deterministic": True,
        "output": "perfhom-out",
        "svg": False,
        "threads": 1,
    },
}

_OWNER = {key: sec for sec, keys in DEFAULTS.items() for key in keys}


@dataclass
class RunConfig:
    """Validated configuration plus the built library objects."""

    raw: dict
    cell: CellGeometry
    params: PhysicalParams
    initial: InitialData
    source: str = "<defaults>"
    extras: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def mode(self) -> str:
        return self.raw["run"]["mode"]

    def effective_dict(self) -> dict:
        """Fully resolved config, suitable for echoing (JSON-serializable)."""
        return json.loads(json.dumps(self.raw, default=_jsonable))

    def study_config(self):
        from .corrector import StudyConfig

        g, t, ph, ini = self.raw["geometry"], self.raw["time"], self.raw["physics"], self.raw["initial"]
        return StudyConfig(params=self.params, cell=self.cell, n_per_cell=g["n_per_cell"],
                           t_end=t["t_end"], dt=t["dt"], dt_factor=t["dt_factor"], initial=self.initial,
                           index_convention=ph["index_convention"], v_rates=ph["v_rates"],
                           tol=t["tol"], ill_exponent=ini["ill_exponent"])


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# -- parsing ---------------------------------------------------------------------

def parse_text(text: str, source: str = "<string>") -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else max(1, text.count("\n") + (not text.endswith("\n")))
        raise ParseError(str(exc), line) from None
    return build_config(doc, source)


def parse_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[:exc.start].count(b"\n") + 1
        raise ParseError("file is not valid UTF-8", line) from None
    return parse_text(text, str(path))


def _merge(doc: dict) -> tuple[dict, set]:
    raw = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    given = set()
    for key, val in doc.items():
        if key in DEFAULTS:
            if not isinstance(val, dict):
                raise ValidationError(key, "must be a table")
            for k, v in val.items():
                if k not in DEFAULTS[key]:
                    raise ValidationError(f"{key}.{k}", "unknown key")
                raw[key][k] = v
                given.add(k)
        elif key in _OWNER:
            raw[_OWNER[key]][key] = val
            given.add(key)
        else:
            raise ValidationError(key, "unknown key")
    return raw, given


def build_config(doc: dict, source: str = "<dict>") -> RunConfig:
    raw, given = _merge(doc)
    g, ph, t, ini, run = (raw[s] for s in ("geometry", "physics", "time", "initial", "run"))

    # run
    if run["mode"] not in MODES:
        raise ValidationError("mode", f"must be one of {MODES}")
    for k in ("deterministic", "svg"):
        if not isinstance(run[k], bool):
            raise ValidationError(k, "must be true or false")
    run["threads"] = _posint("threads", run["threads"])
    if not isinstance(run["output"], str):
        raise ValidationError("output", "must be a string")

    # geometry
    for k in ("hole_lo", "hole_hi"):
        g[k] = _pair(k, g[k])
    if isinstance(g["robin_faces"], str):
        g["robin_faces"] = [g["robin_faces"]]
    if not isinstance(g["robin_faces"], list) or any(f not in FACES for f in g["robin_faces"]):
        raise ValidationError("robin_faces", f"must be a list drawn from {list(FACES)}")
    try:
        cell = build_cell_geometry(g["hole_lo"], g["hole_hi"], g["robin_faces"])
    except GeometryError as exc:
        raise ValidationError("hole_lo" if "hole" in str(exc) else "robin_faces", str(exc)) from None
    g["epsilon"] = _unit_eps("epsilon", g["epsilon"])
    if not isinstance(g["eps_list"], list):
        g["eps_list"] = [g["eps_list"]]
    g["eps_list"] = [_unit_eps("eps_list", e) for e in g["eps_list"]]
    g["n_per_cell"] = _posint("n_per_cell", g["n_per_cell"])
    if g["cell_n"] is not None:
        g["cell_n"] = _posint("cell_n", g["cell_n"])
    _check_aligned(cell, g["n_per_cell"])
    # physics
    N = _posint("N", ph["N"])
    if N < 1:
        raise ValidationError("N", "must be at least 1")
    ph["N"] = N
    ph["beta"] = _beta(ph["beta"], N)
    ph["delta"] = _positive("delta", ph["delta"])
    for k in ("index_convention", "v_rates"):
        allowed = INDEX_CONVENTIONS if k == "index_convention" else V_RATE_CONVENTIONS
        if ph[k] not in allowed:
            raise ValidationError(k, f"must be one of {allowed}")
    try:
        params = PhysicalParams(
            kappa=_tensor("kappa", ph["kappa"]),
            tau=_tensor("tau", ph["tau"]),
            d=_species("d", ph["d"], N, _tensor),
            rho=_species("rho", ph["rho"], N, _tensor),
            g0=_scalar("g0", ph["g0"]),
            a=_species("a", ph["a"], N, _scalar),
            b=_species("b", ph["b"], N, _scalar),
            smoluchowski=SmoluchowskiParams(np.array(ph["beta"])),
            mollifier=MollifierConfig(ph["delta"]),
        )
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError("physics", str(exc)) from None

    # time
    t["t_end"] = _positive("t_end", t["t_end"])
    if t["dt"] is not None:
        t["dt"] = _positive("dt", t["dt"])
    t["dt_factor"] = _positive("dt_factor", t["dt_factor"])
    t["snapshots"] = _posint("snapshots", t["snapshots"])
    if t["snapshots"] < 2:
        raise ValidationError("snapshots", "need at least 2 (start and end)")
    t["tol"] = _positive("tol", t["tol"])

    # initial data
    initial = _initial(ini, N, given)
    if not isinstance(ini["well_prepared"], bool):
        raise ValidationError("well_prepared", "must be true or false")
    ini["ill_exponent"] = _positive("ill_exponent", ini["ill_exponent"])
    return RunConfig(raw=raw, cell=cell, params=params, initial=initial, source=source)


# -- validators -------------------------------------------------------------------

def _number(name, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(name, f"expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ValidationError(name, "must be finite")
    return v


def _positive(name, v) -> float:
    v = _number(name, v)
    if v <= 0:
        raise ValidationError(name, "must be positive")
    return v


def _posint(name, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValidationError(name, f"expected a positive integer, got {v!r}")
    return v


def _pair(name, v) -> list:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v, v]
    if not isinstance(v, list) or len(v) != 2:
        raise ValidationError(name, "expected two numbers")
    return [_number(name, x) for x in v]


def _unit_eps(name, v) -> float:
    v = _positive(name, v)
    try:
        _unit_fraction(v)
    except GeometryError:
        raise ValidationError(name, f"{v} is not 1/k for a positive integer k") from None
    return v


def _check_aligned(cell: CellGeometry, n: int) -> None:
    for c in (*cell.hole_lo, *cell.hole_hi):
        if abs(c * n - round(c * n)) > 1e-9:
            raise ValidationError("n_per_cell", f"{n} subdivisions do not align with hole coordinate {c}")


def _beta(v, N):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        b = np.full((N, N), _number("beta", v))
    else:
        try:
            b = np.array(v, dtype=float)
        except (TypeError, ValueError):
            raise ValidationError("beta", "must be a number or an N x N matrix") from None
        if b.shape != (N, N):
            raise ValidationError("beta", f"matrix must be {N} x {N}, got shape {b.shape}")
    if not np.allclose(b, b.T, atol=1e-14, rtol=0):
        raise ValidationError("beta", "must be symmetric")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValidationError("beta", "entries must be finite and nonnegative")
    return b.tolist()


def _scalar(name, v) -> ScalarFieldSpec:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return constant(_number(name, v))
    if not isinstance(v, dict) or "kind" not in v:
        raise ValidationError(name, "expected a number or a table with 'kind'")
    kind = v["kind"]
    try:
        if kind == "constant":
            return constant(_number(name, v.get("value", v.get("a"))))
        if kind == "trig":
            return trig(_number(name, v.get("a")), _number(name, v.get("b")))
        if kind == "laminate":
            return laminate(_number(name, v.get("c1", v.get("a"))), _number(name, v.get("c2", v.get("b"))))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(name, str(exc)) from None
    raise ValidationError(name, f"unknown kind {kind!r}")


def _tensor(name, v) -> TensorFieldSpec:
    if isinstance(v, dict) and v.get("kind") == "diagonal":
        return TensorFieldSpec((_scalar(f"{name}.d1", v.get("d1")), _scalar(f"{name}.d2", v.get("d2"))))
    return iso(_scalar(name, v))


def _species(name, v, N, make):
    if isinstance(v, list):
        if len(v) != N:
            raise ValidationError(name, f"expected {N} entries (one per species), got {len(v)}")
        return tuple(make(f"{name}[{i + 1}]", x) for i, x in enumerate(v))
    return (make(name, v),) * N


def _initial(ini, N, given=frozenset()) -> InitialData:
    def expr(name, v):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
        if not isinstance(v, str):
            raise ValidationError(name, "expected a number or an expression string")
        try:
            Expression(v)
        except (SyntaxError, ValueError) as exc:
            raise ValidationError(name, str(exc)) from None
        return v

    u, v = ini["u"], ini["v"]
    if not isinstance(u, list):
        u = [u] * N
    if not isinstance(v, list):
        v = [v] * N
    if len(u) != N:
        if "u" not in given:
            u = [DEFAULT_U[i] if i < len(DEFAULT_U) else "0.5" for i in range(N)]
        else:
            raise ValidationError("u", f"expected {N} initial fields, got {len(u)}")
    if len(v) != N:
        if "v" not in given:
            v = [0.0] * N
        else:
            raise ValidationError("v", f"expected {N} initial fields, got {len(v)}")
    ini["u"], ini["v"] = u, v
    return InitialData(expr("theta", ini["theta"]),
                       tuple(expr(f"u[{i + 1}]", x) for i, x in enumerate(u)),
                       tuple(expr(f"v[{i + 1}]", x) for i, x in enumerate(v)))


def echo(cfg: RunConfig) -> str:
    """The effective configuration as TOML-compatible text."""
    lines = [f"# effective configuration ({cfg.source})"]
    for sec, vals in cfg.effective_dict().items():
        lines.append(f"\n[{sec}]")
        for k, v in vals.items():
            if v is None:
                lines.append(f"# {k} = (unset)")
            else:
                lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + "}"
    return json.dumps(str(v))
