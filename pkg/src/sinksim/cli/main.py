"""``sinksim`` command: fill, sink, repose, sweep, fit and plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError, SinksimError, StabilityError
from ..scenario.analysis import bekker_fit, palm_area
from ..scenario.repose import angle_of_repose
from ..scenario.sandbox import fill_and_settle
from ..scenario.sinkage import pressure_sinkage_run
from .config import RunConfig, load_config, resolve_gravity
from .plot import load_sinkage_svg
from .records import read_csv, run_summary, summary_path, write_csv, write_json
from .snapshot import load_bed, save_bed

log = logging.getLogger("sinksim")

DEFAULT_SLOPES = "0,15,25,35"


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _with_preset(cfg: RunConfig, args) -> RunConfig:
    preset = getattr(args, "preset", None)
    if preset and preset != cfg.preset:
        cfg = RunConfig.model_validate({**cfg.model_dump(), "preset": preset}).validate_all()
    return cfg


def _seed(cfg: RunConfig, args) -> int:
    return cfg.seeds[0] if args.seed is None else args.seed


# --- fill ----------------------------------------------------------------
def cmd_fill(args) -> int:
    cfg = _with_preset(load_config(args.config), args)
    seed = _seed(cfg, args)
    spec = cfg.sandbox_spec(args.material)
    gravity = cfg.gravity_value(args.gravity)
    out = Path(args.out) if args.out else Path(cfg.output.dir) / f"bed_{spec.preset}_s{seed}.txt"
    log.info("filling %s sandbox (%s, about %d particles), seed %d, g = %g m/s^2", spec.preset,
             spec.material.name, spec.estimated_count(), seed, gravity)
    bed = fill_and_settle(spec, seed, gravity=gravity)
    save_bed(bed, out)
    print(f"wrote {out} ({bed.n} particles, depth {1e3 * bed.depth:.1f} mm)")
    return 0


# --- sink ----------------------------------------------------------------
def _sink_one(cfg: RunConfig, bed, theta_deg, t4, gravity, csv_path: Path) -> tuple[int, dict]:
    """One pressure-sinkage run written to ``csv_path`` and its summary JSON."""
    geom = cfg.gripper_geometry()
    profile = cfg.load_profile(theta_deg, t4, gravity)
    area = palm_area(geom.palm_radius)
    error = None
    code = 0
    try:
        record = pressure_sinkage_run(bed, geom, profile, gravity,
                                      sample_rate=cfg.coupling.sample_rate,
                                      dt_cpl=cfg.coupling.dt_cpl)
    except StabilityError as exc:
        record = getattr(exc, "record", None)
        if record is None:
            raise
        error = str(exc)
        code = exc.exit_code
        log.error("run stopped: %s", error)
    write_csv(record, csv_path, error)
    summary = run_summary(record, area, error)
    summary["contact_area_m2"] = area
    summary["config"] = cfg.model_dump(mode="json")
    write_json(summary, summary_path(csv_path))
    return code, summary


def _bed_for(cfg: RunConfig, args, seed: int, gravity: float):
    if args.bed:
        bed = load_bed(args.bed)
        want = cfg.bed_material(args.material).name
        if bed.spec.material.name != want:
            raise ConfigError(f"bed holds {bed.spec.material.name!r} but the run asks for "
                              f"{want!r}", field="bed")
        return bed
    log.info("no --bed given; filling a fresh bed with seed %d", seed)
    return fill_and_settle(cfg.sandbox_spec(args.material), seed, gravity=gravity)


def cmd_sink(args) -> int:
    cfg = _with_preset(load_config(args.config), args)
    gravity = cfg.gravity_value(args.gravity)
    bed = _bed_for(cfg, args, _seed(cfg, args), gravity)
    theta = cfg.load.theta_deg if args.slope is None else args.slope
    out = Path(args.out) if args.out else Path(cfg.output.dir) / f"sink_theta{theta:g}.csv"
    code, summary = _sink_one(cfg, bed, theta, args.t4, gravity, out)
    final = summary["final_sinkage_m"]
    print(f"wrote {out}: final sinkage "
          f"{'n/a' if final is None else f'{1e3 * final:.3f} mm'}, "
          f"max |sigma| {summary['max_abs_sigma_N']:.3f} N, "
          f"clipping warnings {summary['clipping_warnings']}")
    return code


# --- repose --------------------------------------------------------------
def cmd_repose(args) -> int:
    cfg = load_config(args.config)
    material = cfg.bed_material(args.material)
    seed = _seed(cfg, args)
    res = angle_of_repose(material, cfg.repose_spec(), seed)
    out = Path(args.out) if args.out else Path(cfg.output.dir) / f"repose_{material.name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    d = cfg.repose_spec().particle_diameter
    h = np.where(np.isnan(res.heights), 0.0, res.heights)
    # heap height field on a one-diameter grid, metres, rows along x
    np.savetxt(out, h, delimiter=",", fmt="%.6e",
               header=f"heap height field, cell {d!r} m, material {material.name}, seed {seed}")
    write_json(res.summary(), out.with_name(out.stem + ".summary.json"))
    flag = " (degenerate heap)" if res.degenerate else ""
    print(f"angle of repose {res.angle_deg:.2f} deg{flag}; height field {out}")
    return 0


# --- sweep ---------------------------------------------------------------
def _sweep_worker(job: dict) -> dict:
    """One sweep cell in its own directory; runs in a worker process."""
    cfg = RunConfig.model_validate(job["config"]).validate_all()
    run_dir = Path(job["dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    entry = {k: job[k] for k in ("theta_deg", "t4", "seed")}
    entry["dir"] = run_dir.name
    wall = time.perf_counter()
    try:
        bed = (load_bed(job["bed"]) if job.get("bed")
               else fill_and_settle(cfg.sandbox_spec(), job["seed"], gravity=job["gravity"]))
        code, summary = _sink_one(cfg, bed, job["theta_deg"], job["t4"], job["gravity"],
                                  run_dir / "run.csv")
        entry.update(status="ok" if code == 0 else "truncated", exit_code=code,
                     final_sinkage_m=summary["final_sinkage_m"],
                     clipping_warnings=summary["clipping_warnings"])
    except SinksimError as exc:
        entry.update(status="failed", exit_code=exc.exit_code, error=str(exc))
    entry["wall_clock_s"] = time.perf_counter() - wall
    return entry


def cmd_sweep(args) -> int:
    cfg = _with_preset(load_config(args.config), args)
    gravity = cfg.gravity_value(args.gravity)
    durations = args.t4 or [cfg.load.t4]
    combos = [(th, t4) for th in args.slopes for t4 in durations]
    seeds = args.seeds or ([args.seed] * len(combos) if args.seed is not None else None)
    if seeds is None:
        seeds = cfg.seeds if len(cfg.seeds) >= len(combos) else \
            [cfg.seeds[0] + k for k in range(len(combos))]
    if len(seeds) < len(combos):
        raise ConfigError(f"need {len(combos)} seeds, got {len(seeds)}", field="seeds")
    out = Path(args.out) if args.out else Path(cfg.output.dir) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    repose = cfg.bed_material().repose_target_deg
    jobs = []
    for (th, t4), seed in zip(combos, seeds):
        if repose is not None and th > repose + 5:
            log.warning("slope %g deg exceeds the repose angle %g deg + 5", th, repose)
        jobs.append({"config": cfg.model_dump(mode="json"), "theta_deg": th, "t4": t4,
                     "seed": seed, "gravity": gravity, "bed": args.bed,
                     "dir": str(out / f"theta{th:g}_t4{t4:g}_s{seed}")})
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            entries = list(pool.map(_sweep_worker, jobs))
    else:
        entries = [_sweep_worker(j) for j in jobs]
    manifest = {"version": __version__, "gravity_m_s2": gravity, "slopes_deg": args.slopes,
                "t4_s": durations, "runs": entries}
    write_json(manifest, out / "manifest.json")
    for e in entries:
        z = e.get("final_sinkage_m")
        print(f"theta={e['theta_deg']:g} t4={e['t4']:g} seed={e['seed']}: {e['status']}"
              + (f", final sinkage {1e3 * z:.3f} mm" if z is not None else ""))
    print(f"manifest {out / 'manifest.json'}")
    return max((e["exit_code"] for e in entries), default=0)


# --- fit -----------------------------------------------------------------
def _area_for(csv_path: Path, area):
    if area is not None:
        return area
    sp = summary_path(csv_path)
    if sp.is_file():
        a = json.loads(sp.read_text()).get("contact_area_m2")
        if a:
            return float(a)
    raise ConfigError("no --area given and no summary JSON with contact_area_m2 next to the "
                      "CSV", field="area")


def cmd_fit(args) -> int:
    path = Path(args.csv)
    cols = read_csv(path)
    fit = bekker_fit(cols["sigma_N"], cols["sinkage_m"], _area_for(path, args.area))
    print(f"k = {fit.k:.6g}")
    print(f"n = {fit.n:.6g}")
    print(f"residual = {fit.residual:.6g}")
    if fit.flagged:
        print("warning: poor power-law fit")
    if args.out:
        write_json(fit.to_dict(), args.out)
    return 0


# --- plot ----------------------------------------------------------------
def cmd_plot(args) -> int:
    labels = args.labels.split(",") if args.labels else [Path(c).stem for c in args.csv]
    if len(labels) != len(args.csv):
        raise ConfigError(f"{len(args.csv)} CSVs but {len(labels)} labels", field="labels")
    series = []
    for lab, c in zip(labels, args.csv):
        cols = read_csv(c)
        series.append((lab, cols["sigma_N"], cols["sinkage_m"]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(load_sinkage_svg(series, args.title))
    print(f"wrote {out}")
    return 0


# --- parser --------------------------------------------------------------
def _gravity(text: str):
    try:
        resolve_gravity(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinksim", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker processes for sweep (runs are single-threaded)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="random seed (default: first config seed)")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("fill", help="fill and settle a sandbox, write a bed snapshot")
    common(p, "snapshot path")
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--material", help="bed material name")
    p.add_argument("--gravity", type=_gravity, help="earth, moon or a value in m/s^2")
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("sink", help="one pressure-sinkage run to CSV + summary JSON")
    common(p, "CSV path")
    p.add_argument("--bed", help="bed snapshot (default: fill a fresh bed)")
    p.add_argument("--slope", type=float, help="slope angle in degrees")
    p.add_argument("--t4", type=float, help="end of the loading ramp in seconds")
    p.add_argument("--gravity", type=_gravity, help="earth, moon or a value in m/s^2")
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--material", help="bed material name")
    p.set_defaults(func=cmd_sink)

    p = sub.add_parser("repose", help="lifted-cylinder angle of repose")
    common(p, "heap height-field CSV path")
    p.add_argument("--material", help="bed material name")
    p.set_defaults(func=cmd_repose)

    p = sub.add_parser("sweep", help="slope x duration runs into a directory with a manifest")
    common(p, "output directory")
    p.add_argument("--slopes", type=_floats, default=_floats(DEFAULT_SLOPES),
                   help=f"comma-separated slope angles (default {DEFAULT_SLOPES})")
    p.add_argument("--t4", type=_floats, help="comma-separated ramp end times (s)")
    p.add_argument("--seeds", type=_ints, help="one seed per run")
    p.add_argument("--bed", help="share one bed snapshot across all runs")
    p.add_argument("--gravity", type=_gravity, help="earth, moon or a value in m/s^2")
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker processes, one run each")
    p.set_defaults(func=cmd_sweep, material=None)

    p = sub.add_parser("fit", help="power-law pressure-sinkage fit of a run CSV")
    p.add_argument("csv")
    p.add_argument("--area", type=float, help="contact area in m^2 (default: from summary)")
    p.add_argument("--out", help="write the fit as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plot", help="load-sinkage chart of one or more run CSVs as SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("--labels", help="comma-separated series labels")
    p.add_argument("--title")
    p.add_argument("--out", required=True, help="SVG path")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SinksimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
