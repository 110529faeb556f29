"""Command-line entry point: ``ssfeedback <command> --config f.ini --out dir --seed n``.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O error.
"""

import argparse
import dataclasses
import logging
import os
import sys

from ssfeedback.channel import sample_site, save_dataset
from ssfeedback.errors import ConfigError, DatasetFormatError, NumericFailure
from ssfeedback.harness import experiments as ex
from ssfeedback.harness.config import ExperimentConfig, load_config
from ssfeedback.learn.checkpoint import load_model

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("gen-site", "train", "eval", "ablation", "pareto", "compare", "angular")

log = logging.getLogger("ssfeedback")


def build_parser():
    ap = argparse.ArgumentParser(prog="ssfeedback", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI experiment config (defaults when omitted)")
        p.add_argument("--out", help="output directory (env SSFB_OUT_DIR, else ./out)")
        p.add_argument("--seed", type=int, help="master seed; overrides [experiment] seed")
        p.add_argument("--workers", type=int, help="process-pool size for training jobs")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("eval", "compare", "angular"):
            p.add_argument("--model", help="checkpoint to use (default <out>/model.blml; "
                                           "trained on the fly if missing)")
        if name == "train":
            p.add_argument("--all-settings", action="store_true",
                           help="also train every (K, Q) in kq_list for convergence curves")
        if name == "angular":
            p.add_argument("--samples", help="comma-separated test-split sample ids")
    return ap


def resolve(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.out_dir = args.out or os.environ.get("SSFB_OUT_DIR", "out")
    return cfg.validate()


def _artifacts(cfg, args):
    path = getattr(args, "model", None) or os.path.join(cfg.out_dir, "model.blml")
    if os.path.exists(path):
        probe, model = load_model(path)
        if model.n_t != cfg.site.n_t:
            raise ConfigError(f"checkpoint n_t={model.n_t} but config n_t={cfg.site.n_t}")
        return probe, model
    if getattr(args, "model", None):
        raise FileNotFoundError(path)
    log.info("no checkpoint at %s; training one", path)
    probe, model, _ = ex.train_main(cfg, cfg.out_dir)
    return probe, model


def dispatch(cfg, args):
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cmd = args.command
    if cmd == "gen-site":
        ds = sample_site(cfg.site, cfg.samples, cfg.seed)
        save_dataset(ds, os.path.join(out, "site.blch"))
        ex.write_json(os.path.join(out, "site.json"), ex.summary(cfg, "gen-site", {
            "samples": len(ds), "n_t": ds.n_t, "site": dataclasses.asdict(cfg.site)}))
    elif cmd == "train":
        ex.train_main(cfg, out)
        if args.all_settings:
            ex.run_convergence(cfg, cfg.kq_list, out)
    elif cmd == "eval":
        probe, model = _artifacts(cfg, args)
        ex.run_eval(cfg, probe, model, out)
    elif cmd == "ablation":
        ex.run_ablation(cfg, out)
    elif cmd == "pareto":
        ex.run_pareto(cfg, cfg.k_list, cfg.q_list, out)
    elif cmd == "compare":
        probe, model = _artifacts(cfg, args)
        ex.run_comparison(cfg, probe, model, out)
    elif cmd == "angular":
        probe, model = _artifacts(cfg, args)
        ids = cfg.angular_samples
        if args.samples:
            try:
                ids = tuple(int(t) for t in args.samples.split(","))
            except ValueError as exc:
                raise ConfigError(f"--samples: {exc}") from exc
        ex.run_angular(cfg, probe, model, ids, out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        dispatch(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DatasetFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
