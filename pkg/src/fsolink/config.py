"""Scenario files.

A scenario is an INI file. Every physical quantity carries its unit in
the key name. Angles accept simple arithmetic on ``pi`` such as
``pi/8`` or ``5*pi/8``::

    [channel]
    fog = light          ; or k = ... and beta = ...
    l_km = 0.5
    detection = hd       ; hd | imdd

    [pointing]
    L_m = 500
    wL_m = 0.3
    r0_m = 0.1
    alpha_d_rad = pi/8
    beta_d_rad = 5*pi/8
    sigma = 0.1

    [sweep]
    mu_db_start = 15
    mu_db_stop = 45
    mu_db_step = 5
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .composite import ChannelModel, Detection
from .errors import DomainError
from .fog import FOG_PRESETS, FogParams
from .montecarlo import McConfig
from .pointing import DerivedPointing, PointingGeometry, derive_pointing
from .specfun import SeriesControl
from .tmos_acm import AcmCodeTable, TmosConfig

__all__ = ["ConfigError", "ScenarioConfig", "load_scenario", "parse_scenario"]


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


_KEYS = {
    "channel": {"fog", "k", "beta", "l_km", "detection"},
    "pointing": {"L_m", "wL_m", "r0_m", "alpha_d_rad", "beta_d_rad", "sigma"},
    "sweep": {"mu_db_start", "mu_db_stop", "mu_db_step"},
    "tmos": {"gamma_T_db", "gamma_TH_OUT_db", "H"},
    "acm": {"table", "target_ber"},
    "series": {"abs_tol", "max_terms", "method"},
    "mc": {"n_samples", "seed", "workers", "sampler"},
    "pdf": {"bins"},
    "output": {"path", "format"},
}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_number(text: str) -> float:
    """Evaluate a numeric literal or arithmetic on ``pi``."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            value = walk(node.operand)
            return -value if isinstance(node.op, ast.USub) else value
        raise ValueError(f"not a number: {text!r}")

    try:
        return walk(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"not a number: {text!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    fog: FogParams
    detection: Detection
    geometry: PointingGeometry
    mu_db: tuple[float, ...]
    tmos: TmosConfig
    table: AcmCodeTable
    series: SeriesControl = field(default_factory=SeriesControl)
    method: str = "auto"
    mc: McConfig = field(default_factory=McConfig)
    pdf_bins: int = 200
    output_path: str | None = None
    output_format: str = "csv"

    def pointing(self) -> DerivedPointing:
        return derive_pointing(self.geometry)

    def model(self, mu_db: float, pointing: DerivedPointing | None = None) -> ChannelModel:
        d = pointing if pointing is not None else self.pointing()
        return ChannelModel.from_db(self.fog, d, self.detection, mu_db, self.series)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        head = re.match(r"\[([^\]]+)\]", line)
        if head:
            section = head.group(1).strip()
        elif section and ("=" in line or ":" in line) and not line.startswith(("#", ";")):
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            lines[(section, key)] = no
    return lines


def parse_scenario(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> ScenarioConfig:
    """Parse scenario text; errors name the file and line."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    lines = _key_lines(text)

    def where(section, key=None):
        no = lines.get((section, key)) if key else None
        return f"{source}:{no}" if no else f"{source} [{section}]"

    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _KEYS[section]:
                raise ConfigError(f"{where(section, key)}: unknown key {key!r} in [{section}]")

    def get(section, key, kind=float, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"{source}: missing required key {key!r} in [{section}]")
            return default
        raw = parser.get(section, key)
        try:
            if kind is float:
                return _eval_number(raw)
            if kind is int:
                value = _eval_number(raw)
                if not value.is_integer():
                    raise ValueError(f"expected an integer, got {raw!r}")
                return int(value)
            return raw.strip()
        except ValueError as exc:
            raise ConfigError(f"{where(section, key)}: {exc}") from None

    def build(section, fn):
        try:
            return fn()
        except DomainError as exc:
            raise ConfigError(f"{where(section)}: {exc}") from None

    l_km = get("channel", "l_km", required=True)
    preset = get("channel", "fog", str)
    if preset is not None:
        if parser.has_option("channel", "k") or parser.has_option("channel", "beta"):
            raise ConfigError(f"{where('channel', 'fog')}: give either fog or k/beta, not both")
        if preset not in FOG_PRESETS:
            raise ConfigError(f"{where('channel', 'fog')}: unknown fog preset {preset!r}")
        k, beta = FOG_PRESETS[preset]
    else:
        k = get("channel", "k", required=True)
        beta = get("channel", "beta", required=True)
    fog = build("channel", lambda: FogParams(k, beta, l_km))
    detection = build("channel", lambda: Detection.parse(get("channel", "detection", str, "hd")))

    geometry = build("pointing", lambda: PointingGeometry(
        L=get("pointing", "L_m", default=500.0),
        alpha_d=get("pointing", "alpha_d_rad", default=math.pi / 8),
        beta_d=get("pointing", "beta_d_rad", default=5 * math.pi / 8),
        sigma=get("pointing", "sigma", required=True),
        r0=get("pointing", "r0_m", default=0.1),
        wL=get("pointing", "wL_m", default=0.3),
    ))

    start = get("sweep", "mu_db_start", required=True)
    stop = get("sweep", "mu_db_stop", default=start)
    step = get("sweep", "mu_db_step", default=5.0)
    if not step > 0.0 or stop < start:
        raise ConfigError(f"{where('sweep')}: need mu_db_step > 0 and mu_db_stop >= mu_db_start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    grid = tuple(float(v) for v in np.round(start + step * np.arange(count), 10))

    gamma_t = get("tmos", "gamma_T_db", default=14.0)
    tmos = build("tmos", lambda: TmosConfig(
        gamma_T_db=gamma_t,
        H=get("tmos", "H", int, 5),
        gamma_TH_OUT_db=get("tmos", "gamma_TH_OUT_db", default=gamma_t),
    ))

    target = get("acm", "target_ber", default=1e-3)
    table_path = get("acm", "table", str)
    if table_path:
        path = Path(table_path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"{where('acm', 'table')}: code table {str(path)!r} is not readable")
        table = build("acm", lambda: AcmCodeTable.from_csv(path, target))
    else:
        table = build("acm", lambda: AcmCodeTable(AcmCodeTable.default().rows, target))

    series = build("series", lambda: SeriesControl(abs_tol=get("series", "abs_tol", default=1e-12),
                                                   max_terms=get("series", "max_terms", int, 500)))
    method = get("series", "method", str, "auto")
    if method not in ("auto", "closed", "quadrature"):
        raise ConfigError(f"{where('series', 'method')}: method must be auto, closed or quadrature")
    if method == "closed" and not float(fog.k).is_integer():
        raise ConfigError(f"{where('series', 'method')}: the closed path needs an integer k")

    mc = build("mc", lambda: McConfig(
        n_samples=get("mc", "n_samples", int, 10**6),
        seed=get("mc", "seed", int, 0),
        workers=get("mc", "workers", int, 1),
        sampler=get("mc", "sampler", str, "hoyt"),
    ))
    bins = get("pdf", "bins", int, 200)
    if bins < 2:
        raise ConfigError(f"{where('pdf', 'bins')}: need at least two bins")
    fmt = get("output", "format", str, "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"{where('output', 'format')}: format must be csv or json")
    out = get("output", "path", str)
    if out and base_dir is not None and not Path(out).is_absolute():
        out = str(base_dir / out)

    return ScenarioConfig(fog=fog, detection=detection, geometry=geometry, mu_db=grid,
                          tmos=tmos, table=table, series=series, method=method, mc=mc,
                          pdf_bins=bins, output_path=out, output_format=fmt)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {str(path)!r}: {exc.strerror}") from None
    return parse_scenario(text, source=str(path), base_dir=path.parent)
