"""RunConfig: every knob of synth / analyze / reproduce, resolved settings.ini < JSON < command line."""

from __future__ import annotations

import configparser
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import psutil

from errors import InvalidParameterError
from experiment_io import AnalysisOptions
from field_synthesis import DEFAULT_GRID_SIZE, DEFAULT_WAVELENGTH, GridSpec, OpticsParams, default_grid
from paths import SETTINGS_FILE
from polarimetry import SUPPORTED_BIT_DEPTHS

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
THREADS_ENV = "SKYRM_THREADS"
SECTIONS = ("Synthesis", "Degradation", "Analysis", "Reproduce")
FIG3_DELTAS = [2, 4, 6, 8, 10, 12]


def _optional(parse):
    def parser(text: str):
        if text.strip().lower() in ("auto", "none", ""):
            return None
        return parse(text)
    return parser


def _boolean(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list:
    return [float(item) for item in text.replace(",", " ").split()]


def _ints(text: str) -> list:
    return [int(item) for item in text.replace(",", " ").split()]


_INI_PARSERS = {
    "l1": int, "l2": int, "theta0": float, "grid": int, "extent": _optional(float),
    "waist": float, "wavelength": float, "z": float, "basis": str.strip, "fmt": str.strip,
    "noise_rel": float, "bit_depth": _optional(int), "shift_px": float, "seed": int,
    "floor_rel": _optional(float), "eta": _optional(float), "window": int, "smooth_px": _optional(float),
    "radii": _optional(_floats), "radius": _optional(float), "center": _optional(_floats),
    "calibrate": _boolean, "four_projection": _boolean,
    "deltas": _ints, "reproduce_noise_rel": float, "reproduce_bit_depth": _optional(int),
    "reproduce_shift_px": float,
}


@dataclass
class RunConfig:
    # synthesis
    l1: int = 0
    l2: int = 2
    theta0: float = 0.0
    grid: int = DEFAULT_GRID_SIZE
    extent: float | None = None
    waist: float = 1.0
    wavelength: float = DEFAULT_WAVELENGTH
    z: float = 0.0
    basis: str = "V"
    fmt: str = "csv"
    # degradation; shift_px bounds the random per-image translation
    noise_rel: float = 0.0
    bit_depth: int | None = None
    shift_px: float = 0.0
    seed: int = 0
    # analysis
    floor_rel: float | None = None
    eta: float | None = None
    window: int = 5
    smooth_px: float | None = None
    radii: list | None = None
    radius: float | None = None
    center: list | None = None
    calibrate: bool = True
    four_projection: bool = False
    # reproduce
    deltas: list = field(default_factory=lambda: list(FIG3_DELTAS))
    reproduce_noise_rel: float = 0.01
    reproduce_bit_depth: int | None = 8
    reproduce_shift_px: float = 0.5
    # paths
    input: str | None = None
    output: str | None = None
    force: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.grid < 8:
            raise InvalidParameterError(f"grid must be at least 8 pixels, got {self.grid}")
        if self.extent is not None and self.extent <= 0:
            raise InvalidParameterError(f"extent must be positive, got {self.extent}")
        if self.basis not in ("H", "V"):
            raise InvalidParameterError(f"basis must be H or V, got {self.basis!r}")
        if self.fmt not in ("csv", "pgm"):
            raise InvalidParameterError(f"fmt must be csv or pgm, got {self.fmt!r}")
        for name in ("bit_depth", "reproduce_bit_depth"):
            value = getattr(self, name)
            if value is not None and value not in SUPPORTED_BIT_DEPTHS:
                raise InvalidParameterError(f"{name} must be one of {SUPPORTED_BIT_DEPTHS} or none, got {value}")
        for name in ("noise_rel", "reproduce_noise_rel", "shift_px", "reproduce_shift_px"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.fmt == "pgm" and self.bit_depth is None:
            raise InvalidParameterError("pgm output needs a bit depth")
        if not self.deltas or any(int(d) != d or d <= 0 for d in self.deltas):
            raise InvalidParameterError(f"deltas must be positive integers, got {self.deltas}")
        if self.smooth_px is not None and not self.smooth_px >= 0:
            raise InvalidParameterError(f"smooth_px must be non-negative, got {self.smooth_px}")
        if self.center is not None and len(self.center) != 2:
            raise InvalidParameterError("center takes two coordinates")

    # -- loading ---------------------------------------------------------

    @classmethod
    def from_settings(cls, path=SETTINGS_FILE) -> "RunConfig":
        """Defaults from settings.ini; a missing file yields the built-in defaults."""
        path = Path(path)
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(path, encoding="utf-8"):
            logger.warning(f"Settings file not found, using built-in defaults: {path}")
            return cls()

        values = {}
        for section in SECTIONS:
            if not parser.has_section(section):
                continue
            for key, text in parser.items(section):
                if key not in _INI_PARSERS:
                    raise InvalidParameterError(f"unknown setting [{section}] {key} in {path}")
                try:
                    values[key] = _INI_PARSERS[key](text)
                except ValueError as e:
                    raise InvalidParameterError(f"bad value for [{section}] {key}: {e}") from e
        return cls(**values)

    @classmethod
    def from_dict(cls, data: dict, base: "RunConfig | None" = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {', '.join(unknown)}")
        return replace(base, **data) if base is not None else cls(**data)

    @classmethod
    def from_json(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidParameterError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise InvalidParameterError(f"config {path} must hold a JSON object")
        return cls.from_dict(data, base)

    def overrides(self, **values) -> "RunConfig":
        """Copy with every non-None value applied."""
        return self.from_dict({k: v for k, v in values.items() if v is not None}, base=self)

    # -- output ----------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, directory) -> Path:
        path = Path(directory) / CONFIG_FILE
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    # -- views for the library -------------------------------------------

    def optics(self) -> OpticsParams:
        return OpticsParams(w0=self.waist, wavelength=self.wavelength, z=self.z)

    def grid_spec(self, l1: int | None = None, l2: int | None = None) -> GridSpec:
        l1 = self.l1 if l1 is None else l1
        l2 = self.l2 if l2 is None else l2
        if self.extent is None:
            return default_grid(l1, l2, self.optics(), n=self.grid)
        return GridSpec.square(self.grid, self.extent)

    def analysis_options(self) -> AnalysisOptions:
        return AnalysisOptions(
            floor_rel=self.floor_rel,
            eta=self.eta,
            window=self.window,
            smooth_px=self.smooth_px,
            radii=list(self.radii) if self.radii is not None else None,
            radius=self.radius,
            center=tuple(self.center) if self.center is not None else None,
            calibrate=self.calibrate,
            four_projection=self.four_projection,
        )


def worker_count() -> int:
    cpus = psutil.cpu_count(logical=True) or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return cpus
    try:
        requested = int(raw)
    except ValueError as e:
        raise InvalidParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    if requested < 1:
        raise InvalidParameterError(f"{THREADS_ENV} must be at least 1, got {requested}")
    return min(requested, cpus)
