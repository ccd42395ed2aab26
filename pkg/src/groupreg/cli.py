"""Command-line surface: phantom generation, edge-detector training,
registration training, inference, evaluation, and the four-variant
ablation grid.

Every subcommand resolves its settings with precedence
flags > config file (JSON, via --config) > built-in defaults, prints the
fully resolved configuration before doing any work, and exits with
0 = success, 2 = usage/config error, 3 = data error, 4 = numeric failure.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from groupreg import __version__
from groupreg.errors import DataError, FormatError, NumericError, ShapeError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULTS = {
    "phantom": {"out": None, "size": 192, "frames": 15, "seed": 0, "snr_db": "none",
                "depth": 4.0, "period": 8.0, "hysteresis": 0.5, "lesion": "off"},
    "train-edges": {"data": None, "out": None, "snr_lo": 1.0, "snr_hi": 23.0,
                    "seed": 0, "steps": 600, "lr_max": 0.2, "lr_min": 0.004},
    "train": {"data": None, "out": None, "variant": "aim-ed", "k": 14, "lam": None,
              "epochs": 2500, "lr_max": 0.1, "lr_min": 1e-3, "batch_size": 4,
              "seed": 0, "detector": None, "log": None, "noise_center_db": 7.0,
              "noise_halfwidth_db": 3.5, "max_shift_px": 2, "intensity_jitter_frac": 0.1},
    "register": {"model": None, "series": None, "target": 0, "out": None,
                 "save_fields": False},
    "eval": {"series": None, "registered": None, "report": None, "target": 0,
             "method": "registered"},
    "ablate": {"data": None, "out": None, "snr_levels": "11,6,1", "seeds": "0,1,2",
               "epochs": 500, "k": 8, "detector": None,
               "lam_ed": 1.5, "lam_cc": 1.0, "lr_ed": 0.15, "lr_cc": 0.005,
               "noise_center_db": 3.0, "noise_halfwidth_db": 2.5},
}


def _build_parser():
    p = argparse.ArgumentParser(prog="groupreg",
                                description="Groupwise deformable registration toolkit")
    p.add_argument("--version", action="version", version=f"groupreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text, spec):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None,
                        help="JSON file of settings; flags still win")
        for key, kind in spec:
            flag = "--" + key.replace("_", "-")
            if kind is bool:
                sp.add_argument(flag, action="store_const", const=True, default=None)
            else:
                sp.add_argument(flag, type=kind, default=None)
        return sp

    add("phantom", "generate a synthetic breathing series",
        [("out", str), ("size", int), ("frames", int), ("seed", int),
         ("snr_db", str), ("depth", float), ("period", float),
         ("hysteresis", float), ("lesion", str)])
    add("train-edges", "train the noise-robust edge detector",
        [("data", str), ("out", str), ("snr_lo", float), ("snr_hi", float),
         ("seed", int), ("steps", int), ("lr_max", float), ("lr_min", float)])
    tr = add("train", "train a registration model",
             [("data", str), ("out", str), ("k", int),
              ("epochs", int), ("lr_max", float), ("lr_min", float),
              ("batch_size", int), ("seed", int), ("detector", str), ("log", str),
              ("noise_center_db", float), ("noise_halfwidth_db", float),
              ("max_shift_px", int), ("intensity_jitter_frac", float)])
    tr.add_argument("--variant", choices=["vxm-cc", "vxm-ed", "aim-cc", "aim-ed"],
                    default=None)
    tr.add_argument("--lambda", dest="lam", type=float, default=None)
    add("register", "register a series onto a target frame",
        [("model", str), ("series", str), ("target", int), ("out", str),
         ("save_fields", bool)])
    add("eval", "score a registered image against the clean reference",
        [("series", str), ("registered", str), ("report", str), ("target", int),
         ("method", str)])
    add("ablate", "train and evaluate all four variants over seeds and SNR levels",
        [("data", str), ("out", str), ("snr_levels", str), ("seeds", str),
         ("epochs", int), ("k", int), ("detector", str),
         ("lam_ed", float), ("lam_cc", float), ("lr_ed", float), ("lr_cc", float),
         ("noise_center_db", float), ("noise_halfwidth_db", float)])
    return p


def _resolve(args):
    """Merge flags > config file > defaults; reject unknown file keys."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {path}: invalid JSON ({e})")
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise ValueError(f"config file {path}: unknown keys {unknown}")
        cfg.update(file_cfg)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    missing = [k for k in ("out", "data", "series", "model", "registered", "report")
               if k in cfg and cfg[k] is None and k != "detector"]
    if missing:
        raise ValueError(f"{cmd}: missing required flags {['--' + m for m in missing]}")
    print(f"resolved config [{cmd}]: "
          + json.dumps(cfg, sort_keys=True, default=str))
    return cfg


def _load_training_series(data_dir):
    """A data directory is either a single series directory or a directory
    of series directories. Returns the list of StoredSeries."""
    from groupreg.io import load_series
    d = Path(data_dir)
    if not d.exists():
        raise DataError(f"data directory not found: {d}")
    if (d / "manifest.json").exists():
        return [load_series(d)]
    subs = sorted(p for p in d.iterdir() if (p / "manifest.json").exists())
    if not subs:
        raise DataError(f"{d}: no series directories (manifest.json) found")
    return [load_series(p) for p in subs]


def _clean_stack(series):
    return np.stack([series.clean_frame(j) for j in range(series.n_frames)])


def cmd_phantom(cfg):
    from groupreg.io import write_series
    from groupreg.phantom import Breathing, PhantomSpec, generate
    snr = None if str(cfg["snr_db"]).lower() == "none" else float(cfg["snr_db"])
    lesion = None
    if str(cfg["lesion"]).lower() == "on":
        from groupreg.phantom import Lesion
        lesion = Lesion()
    spec = PhantomSpec(size=cfg["size"], frames=cfg["frames"],
                       breathing=Breathing(depth_px=cfg["depth"],
                                           period_frames=cfg["period"],
                                           hysteresis_phase=cfg["hysteresis"]),
                       lesion=lesion, anatomy_seed=cfg["seed"], noise_snr_db=snr)
    series = generate(spec)
    try:
        write_series(cfg["out"], series, snr_db=snr)
    except OSError as e:
        raise ValueError(f"cannot write series to {cfg['out']}: {e}")
    print(f"wrote {spec.frames} frames of {spec.size}x{spec.size} to {cfg['out']}")
    return EXIT_OK


def cmd_train_edges(cfg):
    from groupreg.edge import edge_error_curve, train_edge_detector
    from groupreg.io import save_model
    from groupreg.pipeline import preprocess
    series = _load_training_series(cfg["data"])
    images = [preprocess(f)[0] for s in series for f in _clean_stack(s)]
    detector = train_edge_detector(images, (cfg["snr_lo"], cfg["snr_hi"]),
                                   seed=cfg["seed"], steps=cfg["steps"],
                                   lr_max=cfg["lr_max"], lr_min=cfg["lr_min"])
    save_model(cfg["out"], detector)
    print(f"wrote detector to {cfg['out']}")
    print("robustness curve (MSE vs binarized clean-Sobel reference):")
    for snr, (det_err, sob_err) in edge_error_curve(detector, images,
                                                    seed=cfg["seed"]).items():
        print(f"  {snr:5.1f} dB: detector {det_err:.4f}  sobel-on-noisy {sob_err:.4f}")
    return EXIT_OK


def cmd_train(cfg):
    from groupreg.io import load_model, save_model
    from groupreg.pipeline import TrainConfig, TrainData, train
    detector = None
    if cfg["variant"].endswith("-ed"):
        if cfg["detector"] is None:
            raise ValueError(f"variant {cfg['variant']} requires --detector")
        detector = load_model(cfg["detector"])
    series = _load_training_series(cfg["data"])
    data = TrainData(train=[_clean_stack(s) for s in series])
    lr_min = cfg["lr_min"]
    if lr_min > cfg["lr_max"]:
        lr_min = cfg["lr_max"]  # a flat (possibly zero) schedule stays expressible
    tc = TrainConfig(variant=cfg["variant"], epochs=cfg["epochs"],
                     lr_max=cfg["lr_max"], lr_min=lr_min,
                     batch_size=cfg["batch_size"], lam=cfg["lam"], k=cfg["k"],
                     seed=cfg["seed"], noise_center_db=cfg["noise_center_db"],
                     noise_halfwidth_db=cfg["noise_halfwidth_db"],
                     max_shift_px=cfg["max_shift_px"],
                     intensity_jitter_frac=cfg["intensity_jitter_frac"])
    result = train(data, tc, detector=detector)
    save_model(cfg["out"], result.best_model)
    log_path = cfg["log"] or (cfg["out"] + ".log.csv")
    lines = ["epoch,train_loss,val_loss,lr"]
    lines += [f"{e},{repr(tl)},{repr(vl)},{repr(lr)}" for e, tl, vl, lr in result.log]
    Path(log_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote model to {cfg['out']} and log to {log_path}")
    return EXIT_OK


def cmd_register(cfg):
    from groupreg.io import load_model, load_series
    from groupreg.pipeline import register
    model = load_model(cfg["model"])
    series = load_series(cfg["series"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    registered, fields = register(model, series, cfg["target"])
    elapsed = time.perf_counter() - start
    np.asarray(registered, dtype="<f4").tofile(out / "registered.raw")
    if cfg["save_fields"]:
        src_ids = [j for j in range(series.n_frames) if j != cfg["target"]]
        for f, j in zip(fields, src_ids):
            np.asarray(f, dtype="<f4").tofile(out / f"field_src_{j:03d}.raw")
    print(f"registered {series.n_frames - 1} sources onto frame {cfg['target']} "
          f"in {elapsed:.3f} s; wrote {out / 'registered.raw'}")
    return EXIT_OK


def cmd_eval(cfg):
    from groupreg.io import load_series
    from groupreg.metrics import MetricReport, report_to_csv, rsnr, ssim
    series = load_series(cfg["series"])
    if series.reference is None:
        raise ValueError("reference required for rSNR/SSIM")
    clean = series.clean_frame(cfg["target"])
    raw = np.fromfile(cfg["registered"], dtype="<f4")
    if raw.size != clean.size:
        raise DataError(f"{cfg['registered']}: expected {clean.size} values, "
                        f"found {raw.size}")
    registered = raw.reshape(clean.shape).astype(np.float64)
    report = MetricReport()
    report.add(cfg["method"], series.snr_db, cfg["target"],
               rsnr(clean, registered), ssim(clean, registered))
    path = Path(cfg["report"])
    if path.suffix == ".json":
        path.write_text(json.dumps(report.aggregate(), sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
    else:
        path.write_text(report_to_csv(report), encoding="utf-8")
    row = report.rows[0]
    print(f"rSNR {row['rsnr_db']} dB  SSIM {row['ssim']}; wrote {path}")
    return EXIT_OK


def cmd_ablate(cfg):
    from groupreg.edge import train_edge_detector
    from groupreg.io import load_model
    from groupreg.metrics import MetricReport, report_to_csv
    from groupreg.model import VARIANTS
    from groupreg.pipeline import TrainConfig, TrainData, preprocess, register, train
    series = _load_training_series(cfg["data"])
    stacks = [_clean_stack(s) for s in series]
    # last series is the evaluation set (held out when more than one exists)
    test_series = series[-1]
    test_clean = stacks[-1]
    train_stacks = stacks[:-1] if len(stacks) > 1 else stacks
    levels = [float(v) for v in str(cfg["snr_levels"]).split(",")]
    seeds = [int(v) for v in str(cfg["seeds"]).split(",")]
    if cfg["detector"] is not None:
        detector = load_model(cfg["detector"])
    else:
        images = [preprocess(f)[0] for st in train_stacks for f in st]
        detector = train_edge_detector(images, seed=0)
    power = float(np.mean(test_clean ** 2))
    noisy = {}
    for level in levels:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([0xAB1A7E, int(round(level * 1000))])))
        sigma = float(np.sqrt(power * 10.0 ** (-level / 10.0)))
        noisy[level] = test_clean + rng.normal(0.0, sigma, size=test_clean.shape)
    settings = {"ed": (cfg["lam_ed"], cfg["lr_ed"]), "cc": (cfg["lam_cc"], cfg["lr_cc"])}
    report = MetricReport()
    for variant in VARIANTS:
        lam, lr = settings[variant.split("-")[1]]
        for seed in seeds:
            tc = TrainConfig(variant=variant, epochs=cfg["epochs"], k=cfg["k"],
                             seed=seed, lam=lam, lr_max=lr, lr_min=lr / 100,
                             noise_center_db=cfg["noise_center_db"],
                             noise_halfwidth_db=cfg["noise_halfwidth_db"])
            result = train(TrainData(train=train_stacks), tc,
                           detector=detector if variant.endswith("-ed") else None)
            model = result.best_model
            for level in levels:
                frames = noisy[level]
                for idx in range(frames.shape[0]):
                    from groupreg.metrics import endpoint_error, rsnr, ssim
                    registered, fields = register(model, frames, idx)
                    epe = None
                    if test_series.gt_fields is not None:
                        gt = test_series.gt_fields
                        src_ids = [j for j in range(frames.shape[0]) if j != idx]
                        epe = float(np.mean([endpoint_error(f, gt[idx] - gt[j])
                                             for f, j in zip(fields, src_ids)]))
                    report.add(variant, level, idx, rsnr(test_clean[idx], registered),
                               ssim(test_clean[idx], registered), epe)
            print(f"trained and evaluated {variant} seed {seed}")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "rows.csv").write_text(report_to_csv(report), encoding="utf-8")
    table = report.aggregate()
    (out / "table.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n",
                                    encoding="utf-8")
    print(json.dumps(table, sort_keys=True, indent=2))
    print(f"wrote {out / 'rows.csv'} and {out / 'table.json'}")
    return EXIT_OK


_COMMANDS = {
    "phantom": cmd_phantom,
    "train-edges": cmd_train_edges,
    "train": cmd_train,
    "register": cmd_register,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FormatError, ShapeError, ValueError, IndexError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
