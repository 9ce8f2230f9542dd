"""Structured-text experiment configuration and deterministic CSV output.

The format is one ``key = value`` per line with dotted section names::

    # comment
    command = control
    grid.N = 256
    grid.L = 64*pi
    data.kind = dipole
    time.picard_times = 0.8, 1.6, 3.2

Values are parsed as booleans (``true``/``false``), numbers (arithmetic with
``pi`` allowed), comma-separated lists of those, or bare strings. Unknown
keys are an error so typos cannot silently fall back to defaults. The full
key reference lives in ``docs/config.md``.
"""
from __future__ import annotations

import ast
import csv
import dataclasses
import io
import math
import operator
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


# --- value parsing --------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "inf": math.inf}


def _eval_number(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_number(node.left), _eval_number(node.right))
    raise ValueError("not a number")


def parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    try:
        return _eval_number(ast.parse(t, mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError, TypeError):
        return t


def parse_value(text: str):
    if "," in text:
        return [parse_scalar(p) for p in text.split(",") if p.strip()]
    return parse_scalar(text)


def parse_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key or any(not part.isidentifier() for part in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(val)
    return out


# --- typed configuration -------------------------------------------------

def _as_list(v) -> list:
    if v is None:
        return []
    return list(v) if isinstance(v, list) else [v]


@dataclass
class GridSection:
    n: int = 2
    N: int = 256
    L: float = 64 * math.pi


@dataclass
class TimeSection:
    dt: float = 0.05
    T: float = 51.2
    snapshot_ratio: float = 1.25
    snapshot_times: list = field(default_factory=list)
    picard_times: list = field(default_factory=list)
    cfl: float = 0.5


@dataclass
class DataSection:
    kind: str = "curl_gaussian"
    amplitude: float = 0.3
    width: float | None = None
    angle: float = math.pi / 6
    perturbation: float = 0.0  # taylor_green only
    wavenumber: float = 1.0  # taylor_green only
    noise: float = 0.0  # relative amplitude of a seeded random divergence-free perturbation


@dataclass
class ChiSection:
    shape: str = "smooth_bump"
    time_shape: str | None = None
    R: float = 0.25
    Rprime: float = 0.2


@dataclass
class ForcingSection:
    coeffs: list = field(default_factory=list)  # row-major n x n; empty means no forcing


@dataclass
class ControlSection:
    tol: float = 1e-6
    max_iter: int = 40
    cbar_mode: str = "mean"
    cbar_const: float | None = None
    r: float = 4.0


@dataclass
class FitSection:
    t0: float = 5.12
    t1: float = 51.2
    norm: str = "l2_squared"


@dataclass
class GapSection:
    q: list = field(default_factory=lambda: [2.0])
    t0: float | None = None
    t1: float | None = None
    oversample: int = 1


@dataclass
class ProfileSection:
    """Radial Fourier profile for ``diagnose``: a power law or an explicit table."""

    kind: str = "power_law"
    p: float = 1.0
    s: float = 2.0
    rho_min: float = 1e-4
    rho_max: float = 1e2
    points: int = 601
    rho: list = field(default_factory=list)
    amplitude: list = field(default_factory=list)
    trajectory_norms: list = field(default_factory=list)  # e.g. X_r:4, Xbar_p:2


@dataclass
class SourceSection:
    """Kernel and source for ``profile-check``.

    ``kind = bump``: ``sum_i weights_i chi(R_i, Rprime_i)``; ``kind = pipeline``:
    ``u_k u_l`` from a solved trajectory of the configured data.
    """

    kind: str = "bump"
    kernel: list = field(default_factory=lambda: [0, 1, 0])
    kernel_symmetric: bool = True
    weights: list = field(default_factory=lambda: [1.0])
    R: list = field(default_factory=lambda: [2.0])
    Rprime: list = field(default_factory=lambda: [10.0])
    shape: str = "smooth_bump"
    time_shape: str | None = None
    q: list = field(default_factory=lambda: [1.0, 2.0])
    t0: float = 0.5
    t1: float = 50.0
    samples: int = 21
    oversample: int = 2
    breakdown: bool = False


@dataclass
class OutputSection:
    directory: str = "out"
    prefix: str = ""


_SECTIONS = {
    "grid": GridSection, "time": TimeSection, "data": DataSection, "chi": ChiSection,
    "forcing": ForcingSection, "control": ControlSection, "fit": FitSection, "gap": GapSection,
    "profile": ProfileSection, "source": SourceSection, "output": OutputSection,
}

COMMANDS = ("simulate", "control", "diagnose", "profile-check")


@dataclass
class ExperimentConfig:
    command: str | None = None
    seed: int = 0
    threads: int = 1
    thresholds: dict = field(default_factory=dict)
    grid: GridSection = field(default_factory=GridSection)
    time: TimeSection = field(default_factory=TimeSection)
    data: DataSection = field(default_factory=DataSection)
    chi: ChiSection = field(default_factory=ChiSection)
    forcing: ForcingSection = field(default_factory=ForcingSection)
    control: ControlSection = field(default_factory=ControlSection)
    fit: FitSection = field(default_factory=FitSection)
    gap: GapSection = field(default_factory=GapSection)
    profile: ProfileSection = field(default_factory=ProfileSection)
    source: SourceSection = field(default_factory=SourceSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_mapping(cls, values: dict[str, object]) -> "ExperimentConfig":
        cfg = cls()
        for key, val in values.items():
            head, _, rest = key.partition(".")
            if not rest:
                if head not in ("command", "seed", "threads"):
                    raise ConfigError(f"unknown top-level key {key!r}")
                setattr(cfg, head, val)
                continue
            if head == "thresholds":
                if not isinstance(val, (int, float)) or isinstance(val, bool):
                    raise ConfigError(f"threshold {rest!r} must be a number")
                cfg.thresholds[rest] = float(val)
                continue
            if head not in _SECTIONS or "." in rest:
                raise ConfigError(f"unknown key {key!r}")
            sect = getattr(cfg, head)
            names = {f.name: f for f in dataclasses.fields(sect)}
            if rest not in names:
                raise ConfigError(f"unknown key {key!r}")
            default = names[rest].default_factory() if names[rest].default_factory is not dataclasses.MISSING \
                else names[rest].default
            if isinstance(default, list):
                val = _as_list(val)
            setattr(sect, rest, val)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        return cls.from_mapping(parse_text(text, str(p)))

    def validate(self) -> None:
        g = self.grid
        if not isinstance(g.n, int) or g.n not in (2, 3):
            raise ConfigError(f"grid.n must be 2 or 3, got {g.n!r}")
        if not isinstance(g.N, int) or isinstance(g.N, bool) or g.N < 16 or g.N & (g.N - 1):
            raise ConfigError(f"grid.N must be a power of two >= 16, got {g.N!r}")
        if not isinstance(g.L, (int, float)) or not g.L > 0:
            raise ConfigError(f"grid.L must be a positive number, got {g.L!r}")
        for name in ("dt", "T"):
            v = getattr(self.time, name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"time.{name} must be a positive number, got {v!r}")
        if self.command is not None and self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {self.threads!r}")
        if self.forcing.coeffs and len(self.forcing.coeffs) != g.n ** 2:
            raise ConfigError(f"forcing.coeffs needs {g.n ** 2} entries (row-major), got {len(self.forcing.coeffs)}")
        src = self.source
        if not (len(src.weights) == len(src.R) == len(src.Rprime)):
            raise ConfigError("source.weights, source.R and source.Rprime must have equal lengths")
        if len(src.kernel) != 3 or any(not isinstance(i, int) or not 0 <= i < g.n for i in src.kernel):
            raise ConfigError(f"source.kernel must be three component indices below n, got {src.kernel!r}")
        prof = self.profile
        if prof.kind not in ("power_law", "table", "empty"):
            raise ConfigError(f"profile.kind must be power_law, table or empty, got {prof.kind!r}")
        if prof.kind == "table" and len(prof.rho) != len(prof.amplitude):
            raise ConfigError("profile.rho and profile.amplitude must have equal lengths")


# --- CSV ----------------------------------------------------------------

def format_value(v) -> str:
    """Numbers in scientific notation with 17 significant digits; others verbatim."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.16e}"
    return "" if v is None else str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of length {len(row)} does not match header of length {len(header)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def atomic_write(path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    return atomic_write(path, csv_text(header, rows))
