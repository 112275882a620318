"""Run configuration: an INI-style ``key = value`` file with ``[section]`` headers.

Sections and keys (defaults in parentheses)::

    [fluid]          sigma (1), mu0 (1), tau_star (1), alpha (2)
    [coefficients]   a, b, alpha, b_tilde (implied by b and alpha)
    [domain]         half_length (1), n_cells (128)
    [initial]        kind = constant | cosine | samples (cosine)
                     value (1)             constant level
                     c0 (1), c1 (0.5), k (1)   c0 + c1 cos(k pi x / l)
                     path                  whitespace/comma separated heights,
                                           relative to the config file
    [solver]         every SolverConfig field
    [output]         directory (output), snapshot_interval (100),
                     diagnostics_every (1)
    [forcing]        drain_rate (0)        uniform sink -drain_rate
    [mms]            c0 (1), c1 (0.5), k (1), lambda (1), levels (4),
                     dt_factor (1), min_order (1.8 or 1.3, see cli)

Exactly one of ``[fluid]`` and ``[coefficients]`` must be present. Unknown
sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ThinFilmError
from .grid import FilmState, Grid1D
from .rheology import FluidParams, derive_params
from .stepper import SolverConfig

INITIAL_KINDS = ("constant", "cosine", "samples")


@dataclass(frozen=True)
class FluidBlock:
    sigma: float = 1.0
    mu0: float = 1.0
    tau_star: float = 1.0
    alpha: float = 2.0


@dataclass(frozen=True)
class CoefficientBlock:
    a: float
    b: float
    alpha: float
    b_tilde: float | None = None


@dataclass(frozen=True)
class DomainBlock:
    half_length: float = 1.0
    n_cells: int = 128


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "cosine"
    value: float = 1.0
    c0: float = 1.0
    c1: float = 0.5
    k: int = 1
    path: str | None = None


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "output"
    snapshot_interval: int = 100
    diagnostics_every: int = 1


@dataclass(frozen=True)
class ForcingBlock:
    drain_rate: float = 0.0


@dataclass(frozen=True)
class MMSBlock:
    c0: float = 1.0
    c1: float = 0.5
    k: int = 1
    lam: float = 1.0
    levels: int = 4
    dt_factor: float = 1.0
    min_order: float | None = None


# config key -> dataclass field where they differ
_RENAMES = {"mms": {"lambda": "lam"}}

_SECTIONS = {
    "fluid": FluidBlock,
    "coefficients": CoefficientBlock,
    "domain": DomainBlock,
    "initial": InitialCondition,
    "solver": SolverConfig,
    "output": OutputBlock,
    "forcing": ForcingBlock,
    "mms": MMSBlock,
}


@dataclass(frozen=True)
class RunConfig:
    fluid: FluidBlock | None = None
    coefficients: CoefficientBlock | None = None
    domain: DomainBlock = field(default_factory=DomainBlock)
    initial: InitialCondition = field(default_factory=InitialCondition)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputBlock = field(default_factory=OutputBlock)
    forcing: ForcingBlock = field(default_factory=ForcingBlock)
    mms: MMSBlock | None = None
    base_dir: str = field(default=".", compare=False)

    def params(self) -> FluidParams:
        if self.fluid is not None:
            f = self.fluid
            return derive_params(f.sigma, f.mu0, f.tau_star, f.alpha)
        c = self.coefficients
        return FluidParams.from_coefficients(c.a, c.b, c.alpha, c.b_tilde)

    def grid(self) -> Grid1D:
        return Grid1D(self.domain.half_length, self.domain.n_cells)

    def initial_state(self) -> FilmState:
        grid = self.grid()
        ic = self.initial
        x = grid.nodes
        if ic.kind == "constant":
            u = np.full(x.shape, ic.value)
        elif ic.kind == "cosine":
            u = ic.c0 + ic.c1 * np.cos(ic.k * math.pi * x / grid.half_length)
        else:
            path = Path(self.base_dir) / ic.path
            u = _load_samples(path)
            if u.shape != x.shape:
                raise ConfigError(
                    f"{path}: expected {x.size} samples for n_cells={grid.n_cells}, got {u.size}",
                    key="initial.path",
                )
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise ConfigError("initial heights must be finite and strictly positive", key="initial")
        return FilmState(0.0, u)

    def drain(self):
        """Forcing callable for ``run``, or None without a drain."""
        rate = self.forcing.drain_rate
        if rate == 0.0:
            return None
        return _UniformSource(-rate)


@dataclass(frozen=True)
class _UniformSource:
    value: float

    def __call__(self, t, x):
        return np.full(np.shape(x), self.value)


def _load_samples(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read samples file {path}: {exc}", key="initial.path") from exc
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in re.split(r"[,\s]+", line) if v])
    if not rows:
        raise ConfigError(f"samples file {path} is empty", key="initial.path")
    # one value per line, or rows whose last column is the height
    return np.array([r[-1] for r in rows]) if len(rows) > 1 else np.array(rows[0])


def _key_lines(text):
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
        elif section and "=" in line and not line.startswith(("#", ";")):
            lines[(section, line.split("=", 1)[0].strip())] = lineno
    return lines


def _convert(section, key, raw, ftype, lineno):
    where = f"[{section}] {key}"
    loc = f" (line {lineno})" if lineno else ""
    try:
        if "bool" in ftype:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in ftype:
            return int(raw)
        if "float" in ftype:
            value = float(raw)
            return value
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}{loc}: cannot parse {raw!r}", lineno=lineno,
                          key=f"{section}.{key}") from None


def parse_config(text, base_dir="."):
    """Parse and validate a run configuration.

    Raises
    ------
    ConfigError
        With ``lineno`` for syntax errors and ``key`` for unknown keys or
        invalid values.
    """
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True,
        empty_lines_in_values=False,
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside any [section]", lineno=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"line {lineno}: malformed line", lineno=lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(f"line {exc.lineno}: {exc.message}", lineno=exc.lineno) from None

    lines = _key_lines(text)
    blocks = {}
    for section in parser.sections():
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown section [{section}]", key=section)
        renames = _RENAMES.get(section, {})
        types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            name = renames.get(key, key)
            lineno = lines.get((section, key))
            if name not in types:
                loc = f" (line {lineno})" if lineno else ""
                raise ConfigError(f"unknown key [{section}] {key}{loc}", lineno=lineno,
                                  key=f"{section}.{key}")
            kwargs[name] = _convert(section, key, raw, types[name], lineno)
        try:
            blocks[section] = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"[{section}]: {exc}", key=section) from None
        except ThinFilmError as exc:
            raise ConfigError(f"[{section}]: {exc}", key=section) from None

    config = RunConfig(**blocks, base_dir=str(base_dir))
    validate(config)
    return config


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def validate(config):
    if (config.fluid is None) == (config.coefficients is None):
        raise ConfigError("exactly one of [fluid] and [coefficients] must be given",
                          key="fluid/coefficients")
    block = "fluid" if config.fluid is not None else "coefficients"
    alpha = (config.fluid or config.coefficients).alpha
    if not alpha > 1:
        raise ConfigError(f"[{block}] alpha: alpha must exceed 1, got {alpha!r}", key=f"{block}.alpha")
    try:
        config.params()
    except ThinFilmError as exc:
        raise ConfigError(f"[{block}]: {exc}", key=block) from None
    try:
        config.grid()
    except ThinFilmError as exc:
        raise ConfigError(f"[domain]: {exc}", key="domain") from None

    ic = config.initial
    if ic.kind not in INITIAL_KINDS:
        raise ConfigError(f"[initial] kind must be one of {INITIAL_KINDS}, got {ic.kind!r}",
                          key="initial.kind")
    if ic.kind == "samples" and not ic.path:
        raise ConfigError("[initial] path is required for kind = samples", key="initial.path")
    if ic.kind == "cosine" and int(ic.k) < 1:
        raise ConfigError("[initial] k must be a positive integer", key="initial.k")
    config.initial_state()

    out = config.output
    if out.snapshot_interval < 1 or out.diagnostics_every < 1:
        raise ConfigError("[output] intervals must be >= 1", key="output")
    if not (math.isfinite(config.forcing.drain_rate) and config.forcing.drain_rate >= 0):
        raise ConfigError("[forcing] drain_rate must be non-negative", key="forcing.drain_rate")
    if config.mms is not None:
        m = config.mms
        if m.levels < 3:
            raise ConfigError(f"[mms] levels: need at least 3, got {m.levels}", key="mms.levels")
        if not abs(m.c1) < m.c0:
            raise ConfigError("[mms] need |c1| < c0", key="mms.c1")
        if not (m.lam > 0 and m.dt_factor > 0 and m.k >= 1):
            raise ConfigError("[mms] lambda, dt_factor and k must be positive", key="mms")


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config):
    """Inverse of :func:`parse_config` (``None`` fields are omitted)."""
    out = []
    for section, cls in _SECTIONS.items():
        block = getattr(config, section)
        if block is None:
            continue
        inverse = {v: k for k, v in _RENAMES.get(section, {}).items()}
        out.append(f"[{section}]")
        for f in dataclasses.fields(cls):
            value = getattr(block, f.name)
            if value is not None:
                out.append(f"{inverse.get(f.name, f.name)} = {_format(value)}")
        out.append("")
    return "\n".join(out)


def config_dict(config):
    """JSON-friendly nested dict of the configuration."""
    return {
        section: dataclasses.asdict(getattr(config, section))
        for section in _SECTIONS
        if getattr(config, section) is not None
    }
