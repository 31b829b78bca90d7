import sys
import math
import json
import logging
import argparse
import platform
from pathlib import Path
from datetime import datetime
from concurrent.futures import ThreadPoolExecutor, as_completed
import time

import numpy as np
import pandas as pd
import psutil
from colorama import Fore, Style, init as colorama_init

import reporting
from errors import IngestError, InvalidParameterError, OutputExistsError, SkyrmionError
from experiment_io import analyze, ingest, save_measurement_set
from field_synthesis import build_beam
from paths import LOGS_DIR, RUNS_DIR
from polarimetry import IMAGE_KEYS, degrade, project_intensities
from run_config import RunConfig, worker_count

if hasattr(sys.stdout, "reconfigure"):
    sys.stdout.reconfigure(encoding="utf-8")
    sys.stderr.reconfigure(encoding="utf-8")

VERSION = "1.0.0"
EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_USAGE = 2
FIG3_COLUMNS = ["delta_l", "N_ideal", "N_degraded", "uncertainty"]
REFERENCE_KEY = "z2"

logger = logging.getLogger("skyrmscope")


def setup_logging(log_dir=LOGS_DIR, verbose=False):
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = log_dir / f"skyrm_run_{timestamp}.log"

    # stdout carries the result line and tables only
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - [%(levelname)s] - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding="utf-8"),
            logging.StreamHandler(sys.stderr)
        ],
        force=True,
    )
    return log_file


def say(message, color=Fore.CYAN):
    print(f"{color}{message}{Style.RESET_ALL}", file=sys.stderr)


def print_banner():
    banner = f"""
{Fore.CYAN}{Style.BRIGHT}
╔══════════════════════════════════════════════════════════════╗
║                                                              ║
║     SkyrmScope - OPTICAL SKYRMION SYNTHESIS & ANALYSIS       ║
║                                                              ║
║     Version: {VERSION:<48}║
║     Developer: MetaScope Team                                ║
║                                                              ║
╚══════════════════════════════════════════════════════════════╝
{Style.RESET_ALL}"""
    print(banner, file=sys.stderr)
    logger.info("Application started")


def log_environment():
    logger.info(
        f"Python {platform.python_version()} on {sys.platform}, "
        f"{psutil.cpu_count(logical=True)} logical CPUs, "
        f"{round(psutil.virtual_memory().total / (1024**3), 2)} GB RAM, "
        f"numpy {np.__version__}, pandas {pd.__version__}"
    )


def prepare_output(path, force=False):
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise OutputExistsError(path)
    if path.is_dir() and any(path.iterdir()) and not force:
        raise OutputExistsError(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def random_shifts(max_shift, seed):
    """Per-image (sx, sy) of length <= max_shift for every frame but the reference."""
    if max_shift <= 0:
        return {}
    rng = np.random.default_rng([seed, 1])
    shifts = {}
    for key in IMAGE_KEYS:
        if key == REFERENCE_KEY:
            continue
        angle = rng.uniform(0.0, 2.0 * math.pi)
        length = rng.uniform(0.0, max_shift)
        shifts[key] = (length * math.cos(angle), length * math.sin(angle))
    return shifts


def synthesize(cfg, l1, l2, noise_rel=0.0, bit_depth=None, shift_px=0.0):
    beam = build_beam(l1, l2, cfg.theta0, grid=cfg.grid_spec(l1, l2), optics=cfg.optics(), basis=cfg.basis)
    ms = project_intensities(beam)
    if bit_depth is None:
        if noise_rel > 0 or shift_px > 0:
            raise InvalidParameterError("noise and shifts are applied by the camera model; set a bit depth")
        return ms
    return degrade(ms, noise_rel, bit_depth, shift_px=random_shifts(shift_px, cfg.seed), seed=cfg.seed)


def cmd_synth(cfg):
    out = Path(cfg.output) if cfg.output else RUNS_DIR / f"synth_l{cfg.l1}_l{cfg.l2}"
    say(f"\n[SYNTH] l1={cfg.l1}, l2={cfg.l2} -> {out}")
    out = prepare_output(out, cfg.force)

    ms = synthesize(cfg, cfg.l1, cfg.l2, cfg.noise_rel, cfg.bit_depth, cfg.shift_px)
    save_measurement_set(ms, out, cfg.fmt)
    cfg.save(out)

    say(f"✓ Measurement set written to {out}", Fore.GREEN)
    return EXIT_OK


def format_result(result):
    line = f"N = {result.n_skyrmion:.2f} ± {result.uncertainty:.2f}"
    if result.n_skyrmion < 0:
        line += f"  (|N| = {abs(result.n_skyrmion):.2f})"
    return line


def cmd_analyze(cfg):
    source = Path(cfg.input)
    if not source.is_dir():
        raise IngestError("measurement directory not found", source)
    out = Path(cfg.output) if cfg.output else source / "analysis"
    say(f"\n[ANALYZE] {source} -> {out}")
    out = prepare_output(out, cfg.force)

    ms = ingest(source)
    products = analyze(ms, cfg.analysis_options(), out_dir=out)
    cfg.save(out)

    result = products.result
    prov = result.provenance
    resolved = (f"floor_rel={prov['floor_rel']:g}, eta={prov['eta']:g}, "
                f"smoothing={prov['smoothing_px']:g} px, radius={result.integration_radius:.4g}")
    logger.info(f"Resolved analysis settings: {resolved}")
    say(f"  {resolved}")
    if result.coverage < 1.0:
        say(f"⚠ Disk coverage {result.coverage:.1%}", Fore.YELLOW)
    say(f"✓ Report: {products.artifacts['report']}", Fore.GREEN)
    print(format_result(result))
    return EXIT_OK


def _reproduce_row(cfg, delta, degraded):
    if degraded:
        ms = synthesize(cfg, 0, delta, cfg.reproduce_noise_rel, cfg.reproduce_bit_depth, cfg.reproduce_shift_px)
    else:
        ms = synthesize(cfg, 0, delta)
    return analyze(ms, cfg.analysis_options()).result


def cmd_reproduce(cfg):
    out = Path(cfg.output) if cfg.output else RUNS_DIR / "reproduce"
    deltas = [int(d) for d in cfg.deltas]
    say(f"\n[REPRODUCE] delta_l in {deltas} -> {out}")
    out = prepare_output(out, cfg.force)
    rows_dir = out / "rows"
    rows_dir.mkdir(exist_ok=True)

    jobs = [(delta, degraded) for delta in deltas for degraded in (False, True)]
    workers = min(worker_count(), len(jobs))
    logger.info(f"Running {len(jobs)} syntheses on {workers} workers")

    results = {}
    failures = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_reproduce_row, cfg, delta, degraded): (delta, degraded)
                   for delta, degraded in jobs}
        for future in as_completed(futures):
            delta, degraded = futures[future]
            label = f"dl{delta}_{'degraded' if degraded else 'ideal'}"
            try:
                results[(delta, degraded)] = future.result()
            except SkyrmionError as e:
                failures[label] = str(e)
                logger.error(f"Row {label} failed: {e}")
                say(f"✗ {label}: {e}", Fore.RED)
                continue
            (rows_dir / f"{label}.json").write_text(results[(delta, degraded)].to_json(), encoding="utf-8")
            say(f"✓ {label}: N = {results[(delta, degraded)].n_skyrmion:.4f}", Fore.GREEN)

    records = []
    for delta in deltas:
        ideal = results.get((delta, False))
        noisy = results.get((delta, True))
        records.append({
            "delta_l": delta,
            "N_ideal": ideal.n_skyrmion if ideal else math.nan,
            "N_degraded": noisy.n_skyrmion if noisy else math.nan,
            "uncertainty": noisy.uncertainty if noisy else math.nan,
        })
    table = pd.DataFrame.from_records(records, columns=FIG3_COLUMNS)
    table.to_csv(out / "fig3.csv", index=False, float_format="%.12g")
    reporting.write_fig3_script(out / "fig3.gp", "fig3.csv", max_delta=max(deltas))
    if failures:
        (out / "failures.json").write_text(json.dumps(failures, indent=2, sort_keys=True), encoding="utf-8")
    cfg.save(out)

    print(reporting.format_fig3_table(table), end="")
    if failures:
        say(f"⚠ {len(failures)} of {len(jobs)} rows failed; see {out / 'failures.json'}", Fore.YELLOW)
        return EXIT_COMPUTATION
    say(f"✓ Table written to {out / 'fig3.csv'}", Fore.GREEN)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "analyze": cmd_analyze, "reproduce": cmd_reproduce}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON; command-line flags override it")
    common.add_argument("--out", dest="output", help="Output directory")
    common.add_argument("--force", action="store_true", default=None, help="Write into a non-empty output directory")
    common.add_argument("--log-dir", default=str(LOGS_DIR), help="Directory for run logs")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    beam = argparse.ArgumentParser(add_help=False)
    beam.add_argument("--theta0", type=float)
    beam.add_argument("--grid", type=int, help="Pixels per side")
    beam.add_argument("--extent", type=float, help="Half width of the grid in waist units")
    beam.add_argument("--waist", type=float)
    beam.add_argument("--wavelength", type=float)
    beam.add_argument("--z", type=float, help="Propagation distance")
    beam.add_argument("--basis", choices=("H", "V"))
    beam.add_argument("--seed", type=int)

    analysis = argparse.ArgumentParser(add_help=False)
    analysis.add_argument("--floor", dest="floor_rel", type=float, help="Mask floor relative to the peak")
    analysis.add_argument("--eta", type=float, help="Auto-radius intensity threshold")
    analysis.add_argument("--window", type=int, help="Noise estimation window (odd)")
    analysis.add_argument("--smooth", dest="smooth_px", type=float,
                          help="Gaussian frame smoothing sigma in pixels (0 disables)")
    analysis.add_argument("--radius", type=float, help="Integration radius override")
    analysis.add_argument("--radii", type=float, nargs="+", help="Sweep radii, ascending")
    analysis.add_argument("--center", type=float, nargs=2, metavar=("X", "Y"))
    analysis.add_argument("--no-calibrate", dest="calibrate", action="store_false", default=None)
    analysis.add_argument("--four", dest="four_projection", action="store_true", default=None,
                          help="Four-projection reconstruction")

    parser = argparse.ArgumentParser(prog="skyrmscope", description="Optical skyrmion synthesis and analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common, beam], help="Synthesize a six-image measurement set")
    synth.add_argument("--l1", type=int)
    synth.add_argument("--l2", type=int)
    synth.add_argument("--noise", dest="noise_rel", type=float, help="Noise std relative to each frame peak")
    synth.add_argument("--bits", dest="bit_depth", type=int, choices=(8, 16))
    synth.add_argument("--shift", dest="shift_px", type=float, help="Largest random per-image shift in pixels")
    synth.add_argument("--fmt", choices=("csv", "pgm"))

    an = sub.add_parser("analyze", parents=[common, analysis], help="Analyze a measurement directory")
    an.add_argument("--in", dest="input", help="Measurement directory")

    rep = sub.add_parser("reproduce", parents=[common, beam, analysis], help="Skyrmion number against delta l")
    rep.add_argument("--deltas", type=int, nargs="+")
    rep.add_argument("--noise", dest="reproduce_noise_rel", type=float)
    rep.add_argument("--bits", dest="reproduce_bit_depth", type=int, choices=(8, 16))
    rep.add_argument("--shift", dest="reproduce_shift_px", type=float)
    return parser


def load_config(args):
    cfg = RunConfig.from_settings()
    if args.config:
        cfg = RunConfig.from_json(args.config, base=cfg)
    skip = {"command", "config", "log_dir", "verbose"}
    flags = {k: v for k, v in vars(args).items() if k not in skip}
    cfg = cfg.overrides(**flags)
    if args.command == "analyze" and not cfg.input:
        raise InvalidParameterError("analyze needs an input directory (--in)")
    return cfg


def main(argv=None):
    start_time = time.time()
    colorama_init()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    setup_logging(args.log_dir, args.verbose)
    print_banner()
    log_environment()

    try:
        cfg = load_config(args)
    except InvalidParameterError as e:
        say(f"✗ Configuration error: {e}", Fore.RED)
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE

    try:
        code = COMMANDS[args.command](cfg)
        logger.info(f"{args.command} finished in {time.time() - start_time:.2f} seconds")
        return code

    except (IngestError, OutputExistsError) as e:
        say(f"✗ {e}", Fore.RED)
        logger.error(str(e))
        return EXIT_USAGE

    except SkyrmionError as e:
        say(f"✗ {e}", Fore.RED)
        logger.error(f"Computation failed: {e}")
        return EXIT_COMPUTATION

    except KeyboardInterrupt:
        say("\n✗ Interrupted by user", Fore.RED)
        logger.warning("Interrupted by user")
        return EXIT_COMPUTATION

    except Exception as e:
        say(f"✗ Fatal error: {e}", Fore.RED)
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
