"""Measurement directories, centre calibration, local noise estimation and the full analysis pipeline.

A measurement directory holds ``Ix1 .. Iz2`` as CSV or binary PGM (P5) plus ``meta.json``.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

import polarimetry
import reporting
import topology
from errors import CalibrationError, IngestError, InvalidParameterError, SkyrmionError, StageError
from field_synthesis import GridSpec
from polarimetry import IMAGE_KEYS, MeasurementSet, PoincareField

logger = logging.getLogger(__name__)

META_FILE = "meta.json"
CENTROID_THRESHOLD = 0.1
NEGLIGIBLE_SHIFT_PX = 1e-9
DARK_FRAME_REL = 1e-9
DEFAULT_WINDOW = 5

IDEAL_FLOOR_REL = 1e-6
IDEAL_ETA = 1e-5
QUANTIZED_FLOOR_REL = 1e-3
QUANTIZED_ETA = 1e-2


# ---------------------------------------------------------------------------
# On-disk format

_PGM_HEADER = re.compile(rb"P5(?:\s+|\s*#[^\n]*\n)+(\d+)(?:\s+|\s*#[^\n]*\n)+(\d+)(?:\s+|\s*#[^\n]*\n)+(\d+)\s")


def write_pgm(path: Path, image: np.ndarray, bit_depth: int):
    """8-bit frames are saved as mode L (maxval 255), 16-bit ones as mode I (maxval 65535)."""
    counts = np.rint(image)
    array = counts.astype(np.uint8) if bit_depth <= 8 else counts.astype(np.int32)
    Image.fromarray(array).save(path, format="PPM")


def read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Binary PGM frame as float plus the header maxval; any decode failure is an IngestError."""
    try:
        with open(path, "rb") as handle:
            head = handle.read(512)
        match = _PGM_HEADER.match(head)
        if match is None:
            raise IngestError("not a binary PGM (P5) file", path)
        with Image.open(path) as img:
            img.load()
            data = np.asarray(img, dtype=float)
    except (OSError, ValueError, SyntaxError) as e:
        raise IngestError(f"unreadable PGM ({e})", path) from e
    return data, int(match.group(3))


def save_measurement_set(ms: MeasurementSet, directory, fmt: str = "csv") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if fmt not in ("csv", "pgm"):
        raise InvalidParameterError(f"unknown image format {fmt!r}")
    if fmt == "pgm" and ms.bit_depth is None:
        raise InvalidParameterError("PGM output needs quantized data; set a bit depth")

    for key in IMAGE_KEYS:
        if fmt == "pgm":
            write_pgm(directory / f"I{key}.pgm", ms[key], ms.bit_depth)
        else:
            np.savetxt(directory / f"I{key}.csv", ms[key], fmt="%.17g", delimiter=",")

    meta = {"grid": ms.grid.to_dict(), "bit_depth": ms.bit_depth, "format": fmt, "provenance": ms.exposure}
    (directory / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Measurement set written to {directory} ({fmt})")
    return directory


def _load_image(directory: Path, key: str, bit_depth: int | None) -> np.ndarray:
    csv_path = directory / f"I{key}.csv"
    pgm_path = directory / f"I{key}.pgm"
    if csv_path.exists():
        try:
            image = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        except ValueError as e:
            raise IngestError(f"unreadable CSV for I{key} ({e})", csv_path) from e
        return image
    if pgm_path.exists():
        image, maxval = read_pgm(pgm_path)
        if bit_depth is None or maxval != 2 ** bit_depth - 1:
            raise IngestError(f"PGM maxval {maxval} of I{key} does not match bit_depth {bit_depth}", pgm_path)
        return image
    raise IngestError(f"missing image I{key}", csv_path)


def ingest(dir_path) -> MeasurementSet:
    directory = Path(dir_path)
    if not directory.is_dir():
        raise IngestError("measurement directory not found", directory)
    meta_path = directory / META_FILE
    if not meta_path.exists():
        raise IngestError("missing metadata", meta_path)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        grid = GridSpec.from_dict(meta["grid"])
        bit_depth = meta.get("bit_depth")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise IngestError(f"malformed metadata ({e})", meta_path) from e

    images = {}
    for key in IMAGE_KEYS:
        image = _load_image(directory, key, bit_depth)
        if image.shape != grid.shape:
            raise IngestError(f"I{key} has shape {image.shape}, metadata says {grid.shape}", directory / f"I{key}")
        if np.any(image < 0):
            raise IngestError(f"negative values in I{key}", directory / f"I{key}")
        images[key] = image

    try:
        ms = MeasurementSet(grid=grid, images=images, bit_depth=bit_depth,
                            exposure={**(meta.get("provenance") or {}), "source": str(directory)})
    except InvalidParameterError as e:
        raise IngestError(str(e), directory) from e
    logger.info(f"Ingested measurement set from {directory}")
    return ms


# ---------------------------------------------------------------------------
# Calibration

@dataclass
class CalibrationReport:
    offsets: dict
    reference: str
    residual: float
    method: str = "centroid>10%"
    reference_center: tuple = (0.0, 0.0)
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["offsets"] = {k: [float(v[0]), float(v[1])] for k, v in self.offsets.items()}
        data["reference_center"] = [float(c) for c in self.reference_center]
        return data


def intensity_centroid(image: np.ndarray, threshold_rel: float = CENTROID_THRESHOLD) -> tuple[float, float]:
    """Pixel-space (i, j) centroid of the part of ``image`` above ``threshold_rel`` of its peak.

    Weights are the excess over the threshold, so the estimate varies continuously with sub-pixel shifts.
    """
    peak = float(image.max())
    if peak <= 0:
        raise CalibrationError("centroid undefined for an all-dark image")
    weights = np.clip(image - threshold_rel * peak, 0.0, None)
    total = float(np.sum(weights))
    jj, ii = np.indices(image.shape)
    return float(np.sum(weights * ii) / total), float(np.sum(weights * jj) / total)


def calibrate_centers(ms: MeasurementSet, reference: str = "z2") -> tuple[MeasurementSet, CalibrationReport]:
    """Translate every frame so its centroid coincides with the reference frame's centroid."""
    if reference not in IMAGE_KEYS:
        raise InvalidParameterError(f"unknown reference image {reference!r}")
    grid = ms.grid
    brightest = max(float(ms[key].max()) for key in IMAGE_KEYS)
    centroids = {}
    skipped = []
    for key in IMAGE_KEYS:
        if key != reference and float(ms[key].max()) <= DARK_FRAME_REL * brightest:
            # analyzer orthogonal to the whole beam, nothing to register
            skipped.append(key)
            continue
        try:
            centroids[key] = intensity_centroid(ms[key])
        except CalibrationError as e:
            raise CalibrationError(f"I{key}: {e}") from e

    ref_i, ref_j = centroids[reference]
    offsets = {}
    aligned = {}
    for key in IMAGE_KEYS:
        if key in skipped:
            offsets[key] = (0.0, 0.0)
            aligned[key] = ms[key]
            continue
        ox = centroids[key][0] - ref_i
        oy = centroids[key][1] - ref_j
        if key == reference:
            ox = oy = 0.0
        if abs(ox) > grid.nx / 4 or abs(oy) > grid.ny / 4:
            raise CalibrationError(f"I{key} is offset by ({ox:.2f}, {oy:.2f}) px, more than a quarter of the grid")
        offsets[key] = (ox, oy)
        if math.hypot(ox, oy) > NEGLIGIBLE_SHIFT_PX:
            aligned[key] = ndimage.shift(ms[key], (-oy, -ox), order=1, mode="constant", cval=0.0)
        else:
            aligned[key] = ms[key]

    residual = 0.0
    for key in centroids:
        ci, cj = intensity_centroid(aligned[key])
        residual = max(residual, math.hypot(ci - ref_i, cj - ref_j))

    cx = grid.cx + (ref_i - (grid.nx - 1) / 2.0) * grid.dx
    cy = grid.cy + (ref_j - (grid.ny - 1) / 2.0) * grid.dy
    report = CalibrationReport(offsets=offsets, reference=reference, residual=residual,
                               reference_center=(cx, cy), skipped=skipped)
    if skipped:
        logger.warning(f"Dark frames left unregistered: {', '.join('I' + k for k in skipped)}")
    worst = max(math.hypot(*o) for o in offsets.values())
    logger.info(f"Calibrated centres against I{reference}: largest offset {worst:.3f} px, residual {residual:.3f} px")

    # resampled frames are no longer integer counts
    calibrated = MeasurementSet(grid=grid, images=aligned, bit_depth=None,
                                exposure={**ms.exposure, "source_bit_depth": ms.bit_depth})
    return calibrated, report


# ---------------------------------------------------------------------------
# Uncertainty

@dataclass
class UncertaintyMap:
    grid: GridSpec
    sigma: np.ndarray          # (3, ny, nx) for M_x, M_y, M_z; NaN off the mask
    mask: np.ndarray
    sigma_intensity: dict = field(default_factory=dict)


def local_noise(image: np.ndarray, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Standard deviation of the residual after a least-squares plane fit in each window x window patch."""
    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    u, v = np.meshgrid(offsets, offsets, indexing="xy")
    ones = np.ones_like(u)
    n = float(window * window)
    suu = float(np.sum(u * u))

    s1 = ndimage.correlate(image, ones, mode="nearest")
    su = ndimage.correlate(image, u, mode="nearest")
    sv = ndimage.correlate(image, v, mode="nearest")
    s2 = ndimage.correlate(image * image, ones, mode="nearest")
    rss = s2 - s1 ** 2 / n - su ** 2 / suu - sv ** 2 / suu
    return np.sqrt(np.clip(rss, 0.0, None) / (n - 3.0))


def estimate_uncertainty(ms: MeasurementSet, window: int = DEFAULT_WINDOW,
                         floor_rel: float = polarimetry.DEFAULT_FLOOR_REL) -> UncertaintyMap:
    if window < 3 or window % 2 == 0:
        raise InvalidParameterError(f"window must be odd and >= 3, got {window}")
    if window > min(ms.grid.nx, ms.grid.ny):
        raise InvalidParameterError(f"window {window} is larger than the grid")

    mask = polarimetry.valid_mask(ms, floor_rel)
    sigma_i = {key: local_noise(ms[key], window) for key in IMAGE_KEYS}
    sigma = np.full((3,) + ms.grid.shape, np.nan)
    for k, axis in enumerate(polarimetry.AXES):
        i1, i2 = ms[f"{axis}1"], ms[f"{axis}2"]
        s1, s2 = sigma_i[f"{axis}1"], sigma_i[f"{axis}2"]
        denom = (i1 + i2) ** 2
        ok = mask & (denom > 0)
        spread = 2.0 * np.sqrt(i2 ** 2 * s1 ** 2 + i1 ** 2 * s2 ** 2)
        sigma[k][ok] = spread[ok] / denom[ok]
    return UncertaintyMap(grid=ms.grid, sigma=sigma, mask=mask, sigma_intensity=sigma_i)


# ---------------------------------------------------------------------------
# Pipeline

@dataclass
class AnalysisOptions:
    """``None`` for floor_rel / eta picks the ideal or quantized default from the data."""

    floor_rel: float | None = None
    eta: float | None = None
    window: int = DEFAULT_WINDOW
    radii: list | None = None
    radius: float | None = None
    center: tuple | None = None
    calibrate: bool = True
    reference: str = "z2"
    four_projection: bool = False
    smooth_px: float | None = None

    def resolve(self, quantized: bool) -> tuple[float, float]:
        floor = self.floor_rel if self.floor_rel is not None else (QUANTIZED_FLOOR_REL if quantized else IDEAL_FLOOR_REL)
        eta = self.eta if self.eta is not None else (QUANTIZED_ETA if quantized else IDEAL_ETA)
        return floor, eta

    def smoothing(self, quantized: bool) -> float:
        """Frame smoothing sigma in pixels: half the noise window for quantized data, none for ideal data."""
        if self.smooth_px is not None:
            return float(self.smooth_px)
        return self.window / 2.0 if quantized else 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnalysisProducts:
    result: topology.AnalysisResult
    poincare: PoincareField
    density: topology.SkyrmionDensityField
    sweep: list
    calibration: CalibrationReport
    uncertainty: UncertaintyMap
    artifacts: dict = field(default_factory=dict)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SkyrmionError as e:
        raise StageError(name, e) from e


def _default_sweep(radius: float, grid: GridSpec) -> list:
    floor = 2.5 * max(grid.dx, grid.dy)
    return [float(r) for r in radius * np.linspace(0.1, 1.0, 10) if r > floor]


def analyze(ms: MeasurementSet, opts: AnalysisOptions | None = None, out_dir=None) -> AnalysisProducts:
    opts = opts or AnalysisOptions()
    quantized = ms.bit_depth is not None
    floor_rel, eta = opts.resolve(quantized)
    sigma_px = opts.smoothing(quantized)
    logger.info(f"Analysis start: quantized={quantized}, floor_rel={floor_rel:g}, eta={eta:g}, "
                f"smoothing={sigma_px:g} px")

    # an all-dark set must fail as a reconstruction problem, not as an undefined centroid
    _stage("reconstruct", polarimetry.valid_mask, ms, floor_rel)

    if opts.calibrate:
        ms_cal, calibration = _stage("calibrate", calibrate_centers, ms, opts.reference)
    else:
        ref_i, ref_j = _stage("calibrate", intensity_centroid, ms[opts.reference])
        grid = ms.grid
        calibration = CalibrationReport(
            offsets={key: (0.0, 0.0) for key in IMAGE_KEYS}, reference=opts.reference, residual=0.0, method="none",
            reference_center=(grid.cx + (ref_i - (grid.nx - 1) / 2.0) * grid.dx,
                              grid.cy + (ref_j - (grid.ny - 1) / 2.0) * grid.dy))
        ms_cal = ms
    center = tuple(opts.center) if opts.center is not None else calibration.reference_center

    rebuild = polarimetry.reconstruct_four if opts.four_projection else polarimetry.reconstruct
    ms_fit = _stage("smooth", polarimetry.smooth, ms_cal, sigma_px)
    pf = _stage("reconstruct", rebuild, ms_fit, floor_rel)
    if sigma_px > 0:
        pf = pf.normalized()
    unc = _stage("uncertainty", estimate_uncertainty, ms_cal, opts.window, floor_rel)
    if sigma_px > 0:
        # white noise through a 2-D Gaussian filter keeps 1 / (2 sqrt(pi) sigma) of its deviation
        unc.sigma = unc.sigma * min(1.0, 1.0 / (2.0 * math.sqrt(math.pi) * sigma_px))
    sd = _stage("density", topology.skyrmion_density, pf)

    auto = None
    try:
        auto = topology.auto_radius(ms_fit.total_intensity(), ms.grid, center, eta)
    except SkyrmionError as e:
        if opts.radius is None:
            raise StageError("auto_radius", e) from e
    radius = opts.radius if opts.radius is not None else auto
    if opts.radius is not None and auto is not None and opts.radius < auto:
        logger.warning(f"Integration radius {opts.radius:g} lies inside the intensity ring r*={auto:.4f}; "
                       f"the texture is truncated and N will fall short")

    result = _stage("integrate", topology.skyrmion_number, sd, center, radius)
    sigma_density = topology.density_uncertainty(pf, unc.sigma)
    statistical = topology.integral_uncertainty(sd, sigma_density, center, radius)
    truncation = result.uncertainty
    result.uncertainty = math.hypot(truncation, statistical)

    radii = opts.radii if opts.radii is not None else _default_sweep(radius, ms.grid)
    sweep = _stage("sweep", topology.radius_sweep, sd, center, radii)

    cross_check = {}
    try:
        cross_check["equator_radius"] = polarimetry.equator_radius(pf, center)
        cross_check["vorticity"] = polarimetry.spherical_decompose(pf, cross_check["equator_radius"], center).phi_winding
        cross_check["boundary_number"] = topology.boundary_number(pf, center, radius)
    except SkyrmionError as e:
        logger.warning(f"Closed-form cross-check skipped: {e}")

    result.provenance.update({
        "statistical_uncertainty": statistical,
        "truncation_estimate": truncation,
        "auto_radius": auto,
        "floor_rel": floor_rel,
        "eta": eta,
        "smoothing_px": sigma_px,
        "quantized": quantized,
        "options": opts.to_dict(),
        "calibration": calibration.to_dict(),
        "cross_check": cross_check,
        "input": ms.exposure,
    })
    logger.info(f"Analysis done: N = {result.n_skyrmion:.4f} +- {result.uncertainty:.4f}")

    products = AnalysisProducts(result=result, poincare=pf, density=sd, sweep=sweep,
                                calibration=calibration, uncertainty=unc)
    if out_dir is not None:
        products.artifacts = _stage("write", write_artifacts, products, out_dir)
    return products


def write_artifacts(products: AnalysisProducts, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pf = products.poincare
    artifacts = {}
    for name, component in (("x", pf.mx), ("y", pf.my), ("z", pf.mz)):
        path = out / f"poincare_{name}.csv"
        np.savetxt(path, np.where(pf.mask, component, np.nan), fmt="%.17g", delimiter=",")
        artifacts[f"poincare_{name}"] = path

    artifacts["sigma_z"] = topology.save_density_field(products.density, out / "sigma_z.csv")
    artifacts["radius_sweep"] = out / "radius_sweep.csv"
    topology.sweep_table(products.sweep).to_csv(artifacts["radius_sweep"], index=False, float_format="%.12g")

    artifacts["calibration"] = out / "calibration.json"
    artifacts["calibration"].write_text(json.dumps(products.calibration.to_dict(), indent=2, sort_keys=True),
                                        encoding="utf-8")
    artifacts["result"] = out / "result.json"
    artifacts["result"].write_text(products.result.to_json(), encoding="utf-8")
    artifacts["report"] = reporting.write_analysis_report(products, out / "report.txt", artifacts)
    logger.info(f"Artifacts written to {out}")
    return artifacts
