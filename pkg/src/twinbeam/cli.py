"""Command-line entry point.

Every subcommand writes its outputs plus a ``*.manifest.json`` run manifest
(config snapshot, seed, version, stage timings, SHA-256 of every output).
Exit status: 0 on success, 2 on usage errors, 1 when a stage fails.
"""

import argparse
import csv
import io
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .config import ConfigError, load_config, reference_config, save_config, serialize
from .detector import extract_events
from .frameio import FrameWriter, iter_chunks, read_stack, write_manifest, write_pgm
from .parallel import default_jobs

__all__ = ["main", "run_pipeline", "parse_range"]

FIG3_POWERS = "0.015:0.05:8"
FIG4_WAISTS = "0.2e-3:1.0e-3:5"
FIG4_WIDEN = "0.6e-3"
UM = 1e6


def parse_range(text):
    """``a:b:n`` -> ``n`` evenly spaced values; a single number -> ``[a]``."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            n = int(parts[2])
            if n < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(parts[0]), float(parts[1]), n)]
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected a:b:n or a number, got {text!r}")


def _config(path, regime):
    if path is None:
        cfg = reference_config(regime)
        seed = os.environ.get("TWINBEAM_SEED")
        return cfg.replace(rng_seed=int(seed, 0)) if seed else cfg
    cfg = load_config(path)
    return cfg if cfg.regime == regime else cfg.replace(regime=regime)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _rows_csv(path, rows):
    header = list(rows[0])
    _write_csv(path, header, [[r[k] for k in header] for r in rows])


class _Run:
    """Stage timer and manifest writer."""

    def __init__(self, config):
        self.config = config
        self.timings = {}
        self.files = []

    def stage(self, name, func, *args, **kwargs):
        t0 = time.perf_counter()
        out = func(*args, **kwargs)
        self.timings[name] = round(time.perf_counter() - t0, 3)
        return out

    def finish(self, manifest_path):
        write_manifest(manifest_path, serialize(self.config), self.config.rng_seed,
                       __version__, self.timings, self.files)


def _manifest_for(out):
    return out + ".manifest.json"


# --- subcommands -------------------------------------------------------------

def cmd_predict(args):
    from .pmmodel import predict_widths

    cfg = _config(args.config, "intensity")
    run = _Run(cfg)
    waists = args.waist_sweep or [cfg.pump.waist_horizontal_w]
    ell = cfg.pump.ellipticity
    rows = []

    def sweep():
        for w in waists:
            c = cfg.replace(pump__waist_horizontal_w=w, pump__waist_vertical_w=w * ell)
            p = predict_widths(c, widen_factor=args.widen_factor)
            rows.append([w, w * ell, float(p.radial_fwhm_Theta) * UM,
                         float(p.azimuthal_fwhm_Psi) * UM])

    run.stage("predict", sweep)
    _write_csv(args.out, ["w_p_m", "waist_vertical_m", "radial_fwhm_um", "azimuthal_fwhm_um"],
               rows)
    run.files.append(args.out)
    run.finish(_manifest_for(args.out))


def cmd_synth(args):
    from . import synth
    from .pmmodel import predict_widths

    cfg = _config(args.config, args.regime)
    if args.frames is not None:
        cfg = cfg.replace(n_frames=args.frames)
    run = _Run(cfg)
    writer = FrameWriter(args.out)
    if cfg.regime == "counting":
        chunks = synth.iter_counting_chunks(cfg, jobs=args.jobs)
    else:
        pm = run.stage("predict", predict_widths, cfg)
        ac, xc, mean = synth.gain_to_targets(cfg.pump.power_P, cfg.gain, pm, cfg.superpixel_size)
        model = synth.make_speckle_model(ac, xc, cfg.source.cross_strength_mu, mean)
        chunks = synth.iter_intensity_chunks(cfg, model, jobs=args.jobs)

    previews = []

    def write_all():
        for chunk in chunks:
            writer.write(chunk)
            for k, grid in zip(chunk.frame_indices, chunk.frames):
                if len(previews) < args.pgm:
                    p = os.path.join(args.out, f"preview_{int(k):06d}.pgm")
                    write_pgm(p, grid)
                    previews.append(p)

    run.stage("synth", write_all)
    cfg_path = os.path.join(args.out, "config.cfg")
    save_config(cfg, cfg_path)
    run.files += writer.close() + previews + [cfg_path]
    run.finish(os.path.join(args.out, "manifest.json"))


def _frames_config(args, regime):
    path = args.config or os.path.join(args.frames, "config.cfg")
    if not os.path.exists(path):
        raise ConfigError(f"no config given and {path} does not exist")
    return _config(path, regime)


def cmd_analyze_counting(args):
    from .analysis import counting_xc_histogram, estimate_efficiencies, extract_fwhm

    cfg = _frames_config(args, "counting")
    run = _Run(cfg)

    def load_events():
        events = []
        for chunk in iter_chunks(args.frames):
            events.extend(extract_events(f, cfg.detector.threshold) for f in chunk)
        return events

    events = run.stage("events", load_events)
    hist = run.stage("histogram", counting_xc_histogram, events, cfg, args.radius, args.blocks)
    w = run.stage("fwhm", extract_fwhm, hist, cfg.superpixel_size, cfg.geometry.radial_axis,
                  seed=cfg.rng_seed)
    eff = run.stage("efficiency", estimate_efficiencies, events)
    header = ["n_frames", "xc_radial_um", "xc_radial_unc_um", "xc_azimuthal_um",
              "xc_azimuthal_unc_um", "mean_signal_per_frame", "mean_idler_per_frame",
              "eta_signal", "eta_signal_unc", "eta_idler", "eta_idler_unc"]
    row = [len(events), w.fwhm_radial_Theta * UM, w.uncertainty_radial * UM,
           w.fwhm_azimuthal_Psi * UM, w.uncertainty_azimuthal * UM, eff.mean_signal,
           eff.mean_idler, eff.estimated_efficiency_signal, eff.uncertainty_signal,
           eff.estimated_efficiency_idler, eff.uncertainty_idler]
    _write_csv(args.out, header, [row])
    run.files.append(args.out)
    run.finish(_manifest_for(args.out))


def cmd_analyze_intensity(args):
    from .analysis import extract_fwhm, intensity_correlation_maps, select_reference_points

    cfg = _frames_config(args, "intensity")
    run = _Run(cfg)
    stack = run.stage("load", read_stack, args.frames)
    pts = run.stage("points", select_reference_points, stack, cfg, args.points, args.window)
    ac, xc = run.stage("maps", intensity_correlation_maps, stack, pts, args.window, cfg)
    rows = []
    for name, m in (("ac", ac), ("xc", xc)):
        w = run.stage(f"fwhm_{name}", extract_fwhm, m, cfg.superpixel_size,
                      cfg.geometry.radial_axis, seed=cfg.rng_seed)
        rows.append([name, len(stack), len(m.samples), w.fwhm_radial_Theta * UM,
                     w.uncertainty_radial * UM, w.fwhm_azimuthal_Psi * UM,
                     w.uncertainty_azimuthal * UM])
    _write_csv(args.out, ["map", "n_frames", "n_points", "radial_um", "radial_unc_um",
                          "azimuthal_um", "azimuthal_unc_um"], rows)
    run.files.append(args.out)
    run.finish(_manifest_for(args.out))


def _sweep_config(args):
    cfg = _config(args.config, "intensity")
    if args.frames is not None:
        cfg = cfg.replace(n_frames=args.frames)
    if args.points is not None:
        cfg = cfg.replace(n_reference_points=args.points)
    return cfg


def cmd_sweep_power(args):
    from .analysis import width_vs_power_sweep

    cfg = _sweep_config(args)
    run = _Run(cfg)
    rows = run.stage("sweep", width_vs_power_sweep, cfg, args.powers, window=args.window,
                     jobs=args.jobs)
    _rows_csv(args.out, rows)
    run.files.append(args.out)
    run.finish(_manifest_for(args.out))


def cmd_sweep_waist(args):
    from .analysis import width_vs_waist_sweep

    cfg = _sweep_config(args)
    run = _Run(cfg)
    widen = args.widen_at if args.widen_at is not None else []
    rows = run.stage("sweep", width_vs_waist_sweep, cfg, args.waists, widen_waists=widen,
                     window=args.window, jobs=args.jobs)
    _rows_csv(args.out, rows)
    run.files.append(args.out)
    run.finish(_manifest_for(args.out))


def cmd_default_config(args):
    save_config(reference_config(args.regime), args.out)


# --- parser ------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="twinbeam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"twinbeam {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def common(sp, out_default=None, jobs=True):
        sp.add_argument("--config", help="config file (default: built-in parameter set)")
        sp.add_argument("--out", default=out_default, required=out_default is None,
                        help="output path")
        if jobs:
            sp.add_argument("--jobs", type=int, default=default_jobs(),
                            help="worker processes (default: all cores)")

    sp = sub.add_parser("predict", help="phase-matching width predictions")
    common(sp, "predict.csv", jobs=False)
    sp.add_argument("--waist-sweep", type=parse_range, help="pump waists a:b:n in m")
    sp.add_argument("--widen-factor", type=float, default=1.0)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("synth", help="write a synthetic frame stack")
    common(sp)
    sp.add_argument("--regime", choices=("counting", "intensity"), default="intensity")
    sp.add_argument("--frames", type=int, help="number of frames (default: from config)")
    sp.add_argument("--pgm", type=int, default=0, metavar="K",
                    help="also dump the first K frames as 8-bit graymaps")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("analyze-counting", help="coincidence XC width and efficiencies")
    common(sp, jobs=False)
    sp.add_argument("--frames", required=True, help="frame directory")
    sp.add_argument("--radius", type=int, default=16, help="histogram half-size, superpixels")
    sp.add_argument("--blocks", type=int, default=50, help="frame blocks for the bootstrap")
    sp.set_defaults(func=cmd_analyze_counting)

    sp = sub.add_parser("analyze-intensity", help="intensity AC and XC widths")
    common(sp, jobs=False)
    sp.add_argument("--frames", required=True, help="frame directory")
    sp.add_argument("--points", type=int, default=100)
    sp.add_argument("--window", type=int, default=33)
    sp.set_defaults(func=cmd_analyze_intensity)

    for name, func, flag, default, unit, out in (
            ("sweep-power", cmd_sweep_power, "--powers", None, "W", None),
            ("sweep-waist", cmd_sweep_waist, "--waists", None, "m", None),
            ("reproduce-fig3", cmd_sweep_power, "--powers", FIG3_POWERS, "W", "fig3.csv"),
            ("reproduce-fig4", cmd_sweep_waist, "--waists", FIG4_WAISTS, "m", "fig4.csv")):
        sp = sub.add_parser(name, help=f"widths versus {flag[2:-1]}")
        common(sp, out)
        sp.add_argument(flag, dest=flag[2:], type=parse_range,
                        default=parse_range(default) if default else None,
                        required=default is None, help=f"a:b:n in {unit}")
        sp.add_argument("--frames", type=int, help="frames per point (default: from config)")
        sp.add_argument("--points", type=int, help="reference points (default: from config)")
        sp.add_argument("--window", type=int, default=33)
        if flag == "--waists":
            sp.add_argument("--widen-at", type=parse_range,
                            default=parse_range(FIG4_WIDEN) if default else None,
                            help="waists that get an extra widen_factor=2 row")
        sp.set_defaults(func=func)

    sp = sub.add_parser("default-config", help="write the built-in parameter set")
    sp.add_argument("--regime", choices=("counting", "intensity"), default="intensity")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_default_config)
    return p


def run_pipeline(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "jobs", 1) < 1:
        parser.print_usage(sys.stderr)
        print("twinbeam: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"twinbeam: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_pipeline())
