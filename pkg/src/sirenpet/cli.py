"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io
from .baselines import BsremConfig, bsrem, mlem
from .grid import LabelMap
from .metrics import MetricsReport, evaluate
from .optim import LbfgsConfig
from .phantom import PhantomSpec, build_attenuation_map, build_phantom
from .projector import AcquisitionSpec, build_geometry, simulate_acquisition
from .recon import reconstruct_siren
from .siren import SirenConfig, save_checkpoint

log = logging.getLogger("sirenpet")

METRIC_KEYS = ("psnr", "ssim", "ar", "rb", "ir")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="ini file with run settings (flags take precedence)")
    p.add_argument("--threads", type=int, help="BLAS thread count (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sirenpet", description="Sine-network PET reconstruction toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="write activity, mu-map and label grids")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, help="grid size in pixels (default 160)")
    p.add_argument("--pixel-size", type=float, help="pixel size in mm (default 2)")
    p.add_argument("--tumor-radius", type=float, help="tumor radius in pixels (default 6)")
    p.add_argument("--seed", type=int, help="enable ellipse jitter with this seed")

    p = sub.add_parser("simulate", help="simulate a noisy prompt sinogram")
    _common(p)
    p.add_argument("--phantom", required=True, help="directory written by 'phantom'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--angles", type=int, help="projection angles over [0, pi) (default 180)")
    p.add_argument("--prompts", type=float, help="expected total prompts (default 2e5)")
    p.add_argument("--randoms-frac", type=float, help="randoms fraction (default 0.35)")
    p.add_argument("--scatter-frac", type=float, help="scatter fraction (default 0.30)")
    p.add_argument("--seed", type=int, help="Poisson noise seed (default 0)")

    p = sub.add_parser("reconstruct", help="reconstruct an image from a simulated sinogram")
    _common(p)
    p.add_argument("--data", required=True, help="directory written by 'simulate'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--method", choices=("siren", "mlem", "bsrem"), default="siren")
    p.add_argument("--phantom", help="ground-truth directory; adds metric columns to the trajectory")
    p.add_argument("--max-iters", type=int, help="L-BFGS iterations (default 50)")
    p.add_argument("--lbfgs-memory", type=int, help="L-BFGS memory (default 10)")
    p.add_argument("--lr", type=float, help="L-BFGS initial step scale (default 1)")
    p.add_argument("--hidden-layers", type=int, help="sine layers (default 4)")
    p.add_argument("--features", type=int, help="units per sine layer (default 256)")
    p.add_argument("--omega0", type=float, help="sine frequency scale (default 25)")
    p.add_argument("--seed", type=int, help="network init seed (default 0)")
    p.add_argument("--checkpoint-every", type=int, help="save network weights every N iterations")
    p.add_argument("--iters", type=int, help="MLEM/BSREM iterations")
    p.add_argument("--beta", type=float, help="BSREM penalty weight (default 0.355)")
    p.add_argument("--subsets", type=int, help="BSREM subsets (default 10)")

    p = sub.add_parser("evaluate", help="image-quality metrics of one reconstruction")
    _common(p)
    p.add_argument("--recon", required=True, help="reconstructed grid file")
    p.add_argument("--phantom", required=True, help="ground-truth directory")
    p.add_argument("--out", help="CSV file (default: stdout table only)")

    p = sub.add_parser("sweep", help="metric curves over iterations or penalty weights")
    _common(p)
    p.add_argument("--data", required=True, help="directory written by 'simulate'")
    p.add_argument("--phantom", required=True, help="ground-truth directory")
    p.add_argument("--out", required=True, help="long-format CSV")
    p.add_argument("--method", choices=("siren", "mlem", "bsrem"), default="bsrem",
                   help="bsrem sweeps beta; mlem and siren sweep iterations")
    p.add_argument("--betas", default="0.1,0.355,1.0", help="comma-separated BSREM weights")
    p.add_argument("--max-iters", type=int, help="L-BFGS iterations (siren)")
    p.add_argument("--iters", type=int, help="MLEM/BSREM iterations")
    p.add_argument("--subsets", type=int, help="BSREM subsets")
    p.add_argument("--hidden-layers", type=int, help="sine layers (siren)")
    p.add_argument("--features", type=int, help="units per sine layer (siren)")
    p.add_argument("--omega0", type=float, help="sine frequency scale (siren)")
    p.add_argument("--seed", type=int, help="network init seed (siren)")

    p = sub.add_parser("export-png", help="16-bit grayscale PNG of a grid file")
    p.add_argument("--grid", required=True, help="grid file to export")
    p.add_argument("--out", required=True, help="PNG path")
    p.add_argument("--window", nargs=2, type=float, metavar=("MIN", "MAX"),
                   help="display window (default: image min and max)")
    return parser


def _overrides(args, mapping):
    out = {}
    for attr, (section, key) in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.setdefault(section, {})[key] = value
    return out


def _config(args, mapping) -> io.RunConfig:
    try:
        return io.RunConfig(args.config, _overrides(args, mapping))
    except io.ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _outdir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_phantom(directory):
    d = Path(directory)
    gt = io.read_grid(d / "activity.ipg")
    labels = io.read_grid(d / "labels.ipg")
    if not isinstance(labels, LabelMap):
        raise UsageError(f"{d / 'labels.ipg'} is not a label grid")
    return gt, labels


def cmd_phantom(args):
    cfg = _config(args, {"size": ("phantom", "size"), "pixel_size": ("phantom", "pixel_size"),
                         "tumor_radius": ("phantom", "tumor_radius"), "seed": ("phantom", "seed")})
    s = cfg.section("phantom")
    spec = PhantomSpec(size=s["size"], pixel_size=s["pixel_size"], tumor_center=(s["tumor_x"], s["tumor_y"]),
                       tumor_radius=s["tumor_radius"], seed=s["seed"])
    activity, labels = build_phantom(spec)
    mu = build_attenuation_map(spec, labels)
    out = _outdir(args.out)
    io.write_grid(out / "activity.ipg", activity)
    io.write_grid(out / "mu.ipg", mu)
    io.write_grid(out / "labels.ipg", labels)
    cfg.write(out / "config.ini")
    print(f"wrote {spec.size}x{spec.size} phantom to {out} (max activity {activity.values.max():g})")


def cmd_simulate(args):
    cfg = _config(args, {"angles": ("simulate", "angles"), "prompts": ("simulate", "prompts"),
                         "randoms_frac": ("simulate", "randoms_frac"),
                         "scatter_frac": ("simulate", "scatter_frac"), "seed": ("simulate", "seed")})
    s = cfg.section("simulate")
    src = Path(args.phantom)
    gt = io.read_grid(src / "activity.ipg")
    mu = io.read_grid(src / "mu.ipg")
    geom = build_geometry(gt, s["angles"])
    spec = AcquisitionSpec(total_prompts=s["prompts"], randoms_fraction=s["randoms_frac"],
                           scatter_fraction=s["scatter_frac"], scatter_sigma=s["scatter_sigma"], seed=s["seed"])
    measured, model = simulate_acquisition(gt, mu, geom, spec)
    out = _outdir(args.out)
    io.write_sino(out / "measured.ips", measured)
    io.save_model(out / "model", model)
    cfg.write(out / "config.ini")
    print(f"wrote {geom.n_angles}x{geom.n_bins} sinogram with {measured.values.sum():.0f} prompts to {out}")


def _load_data(directory):
    d = Path(directory)
    measured = io.read_sino(d / "measured.ips")
    model = io.load_model(d / "model")
    if measured.geometry != model.geometry:
        raise UsageError("sinogram and model geometries differ")
    return measured, model


_RECON_FLAGS = {
    "max_iters": ("lbfgs", "max_iters"), "lbfgs_memory": ("lbfgs", "memory"), "lr": ("lbfgs", "lr"),
    "checkpoint_every": ("lbfgs", "checkpoint_every"),
    "hidden_layers": ("siren", "hidden_layers"), "features": ("siren", "features"),
    "omega0": ("siren", "omega0"), "seed": ("siren", "seed"),
    "beta": ("bsrem", "beta"), "subsets": ("bsrem", "subsets"),
}


def _siren_configs(cfg):
    s, lb = cfg.section("siren"), cfg.section("lbfgs")
    return (SirenConfig(s["hidden_layers"], s["features"], s["omega0"], s["seed"]),
            LbfgsConfig(memory=lb["memory"], max_iterations=lb["max_iters"], lr=lb["lr"],
                        checkpoint_every=lb["checkpoint_every"]))


def _metric_callback(gt, labels):
    def attach(k, image, record):
        record.metrics = evaluate(image, gt, labels).as_dict()
    return attach if gt is not None else None


def cmd_reconstruct(args):
    flags = dict(_RECON_FLAGS)
    if args.method == "mlem":
        flags["iters"] = ("mlem", "iters")
    elif args.method == "bsrem":
        flags["iters"] = ("bsrem", "iters")
    cfg = _config(args, flags)
    measured, model = _load_data(args.data)
    gt, labels = _load_phantom(args.phantom) if args.phantom else (None, None)
    out = _outdir(args.out)

    if args.method == "siren":
        siren_cfg, lbfgs_cfg = _siren_configs(cfg)
        result = reconstruct_siren(measured, model, siren_cfg, lbfgs_cfg, gt, labels)
        image, records = result.image, result.trajectory.records
        save_checkpoint(out / "final.ipw", result.params)
        for k, theta in result.trajectory.checkpoints.items():
            save_checkpoint(out / f"iter_{k:04d}.ipw", result.params.from_vector(theta))
        status = result.trajectory.status
        if status == "line_search_failed":
            io.write_trajectory(out / "trajectory.csv", records[1:])
            raise FloatingPointError("L-BFGS line search failed twice in a row")
    elif args.method == "mlem":
        image, records = mlem(measured, model, cfg.get("mlem", "iters"),
                              callback=_metric_callback(gt, labels))
        status = "done"
    else:
        b = cfg.section("bsrem")
        bcfg = BsremConfig(beta=b["beta"], n_subsets=b["subsets"], iterations=b["iters"],
                           alpha0=b["alpha0"], gamma=b["gamma"])
        image, records = bsrem(measured, model, bcfg, callback=_metric_callback(gt, labels))
        status = "done"

    if not np.all(np.isfinite(image.values)):
        raise FloatingPointError("reconstruction produced non-finite values")
    io.write_grid(out / "recon.ipg", image)
    # one row per iteration; the starting point stays out of the file
    io.write_trajectory(out / "trajectory.csv", records[1:])
    cfg.write(out / "config.ini")
    print(f"{args.method}: {len(records) - 1} iterations, final loss {records[-1].loss:.6g} ({status})")


def _format_table(report: MetricsReport) -> str:
    d = report.as_dict()
    return "\n".join(f"{k:>5}  {d[k]:.6g}" for k in METRIC_KEYS)


def cmd_evaluate(args):
    recon = io.read_grid(args.recon)
    gt, labels = _load_phantom(args.phantom)
    if recon.shape != gt.shape:
        raise UsageError(f"reconstruction shape {recon.shape} differs from phantom {gt.shape}")
    report = evaluate(recon, gt, labels)
    print(_format_table(report))
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(METRIC_KEYS)
            writer.writerow([repr(getattr(report, k)) for k in METRIC_KEYS])


def cmd_sweep(args):
    flags = dict(_RECON_FLAGS)
    flags["iters"] = ("mlem" if args.method == "mlem" else "bsrem", "iters")
    cfg = _config(args, flags)
    measured, model = _load_data(args.data)
    gt, labels = _load_phantom(args.phantom)
    rows = []
    if args.method == "bsrem":
        try:
            betas = [float(b) for b in args.betas.split(",") if b.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --betas value {args.betas!r}") from exc
        b = cfg.section("bsrem")
        for beta in betas:
            bcfg = BsremConfig(beta=beta, n_subsets=b["subsets"], iterations=b["iters"],
                               alpha0=b["alpha0"], gamma=b["gamma"])
            image, _ = bsrem(measured, model, bcfg)
            rows.append(("bsrem", "beta", beta, evaluate(image, gt, labels)))
    elif args.method == "mlem":
        def keep(k, image, record):
            rows.append(("mlem", "iteration", k, evaluate(image, gt, labels)))
        mlem(measured, model, cfg.get("mlem", "iters"), callback=keep)
    else:
        siren_cfg, lbfgs_cfg = _siren_configs(cfg)
        result = reconstruct_siren(measured, model, siren_cfg, lbfgs_cfg, gt, labels)
        for r in result.trajectory.records:
            rows.append(("siren", "iteration", r.iteration, MetricsReport(**r.metrics)))
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("method", "param_name", "param") + METRIC_KEYS)
        for method, name, value, report in rows:
            writer.writerow([method, name, value] + [repr(getattr(report, k)) for k in METRIC_KEYS])
    print(f"wrote {len(rows)} rows to {args.out}")


def cmd_export_png(args):
    grid = io.read_grid(args.grid)
    window = tuple(args.window) if args.window else None
    if window is not None and not window[1] > window[0]:
        raise UsageError("--window MAX must exceed MIN")
    io.export_png(grid, args.out, window)


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "export-png": cmd_export_png,
}


def _thread_limit(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None) or 0
    try:
        with _thread_limit(threads):
            COMMANDS[args.command](args)
    except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        print(f"sirenpet: numeric failure: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError, OSError) as exc:
        print(f"sirenpet: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
