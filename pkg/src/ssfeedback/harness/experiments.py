"""Experiment drivers: convergence, probing ablation, (K, Q) sweep, scheme
comparison with SE-vs-SNR and CDF exports, and angular responses.

Outputs are CSV/JSON with fixed column order and ``%.17g`` floats so that a
rerun with the same config and seed is byte-identical, with or without a
process pool.
"""

import csv
import io
import json
import logging
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ssfeedback.channel import sample_site
from ssfeedback.errors import DegenerateChannelError, NumericFailure
from ssfeedback.harness.config import SPLIT
from ssfeedback.learn.checkpoint import save_model
from ssfeedback.learn.trainer import TrainConfig, TrainingDiverged, export_deployment, train
from ssfeedback.probing import dft_codebook
from ssfeedback.schemes import (
    angular_response,
    beam_subspace,
    effective_se,
    outcome_subspace,
    psc,
    type1,
    type2,
)

log = logging.getLogger(__name__)

OUTCOME_COLUMNS = ("sample_id", "scheme", "q_or_np", "eta", "rate", "overhead", "effective_se", "flags")


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of {len(row)} fields for header of {len(header)}")
        w.writerow([fmt(v) for v in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def build_tag():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--tags", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=False)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def summary(cfg, kind, results):
    return {"experiment": kind, "build": build_tag(), "config": cfg.echo(), "results": results}


def point_seed(master, index):
    """Independent 32-bit seed for grid point ``index``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


# -- data -----------------------------------------------------------------------


@dataclass
class Splits:
    train: object
    val: object
    test: object
    test_ids: np.ndarray


def split_dataset(ds, seed):
    """70/15/15 split of a permutation of sample indices under ``seed``."""
    n = len(ds)
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 70_15_15])).permutation(n)
    n_tr = int(n * SPLIT[0])
    n_va = int(n * SPLIT[1])
    te = np.sort(perm[n_tr + n_va:])
    return Splits(ds.subset(np.sort(perm[:n_tr])), ds.subset(np.sort(perm[n_tr:n_tr + n_va])),
                  ds.subset(te), te)


def site_data(cfg):
    return split_dataset(sample_site(cfg.site, cfg.samples, cfg.seed), cfg.seed)


def train_config(cfg, k, q, seed, probing_init=None, train_probing=True):
    t = cfg.train
    return TrainConfig(k=k, q=q, depth=t.depth, width=t.width, batch_size=t.batch_size,
                       step_beta=t.step_beta, epochs=t.epochs, optimizer=t.optimizer,
                       noise=t.noise, seed=seed, ridge_eps=t.ridge_eps,
                       probing_init=probing_init or t.probing_init,
                       train_probing=train_probing, clip_norm=t.clip_norm)


# -- parallel training jobs --------------------------------------------------------


def _train_job(args):
    cfg, k, q, seed, init, trainable = args
    data = site_data(cfg)
    tc = train_config(cfg, k, q, seed, init, trainable)
    try:
        probe, model, trace = train(data.train, tc, val_dataset=data.val)
    except TrainingDiverged as exc:
        return {"error": str(exc), "trace": exc.trace}
    return {"probe": probe, "model": model, "trace": trace}


def run_jobs(cfg, jobs):
    """Run training jobs in order; results are returned in submission order."""
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_train_job, jobs))
    return [_train_job(j) for j in jobs]


def trace_rows(trace):
    return trace.rows()


TRACE_HEADER = ("epoch", "train_eta", "val_eta", "grad_norm")


# -- experiments ---------------------------------------------------------------------


def train_main(cfg, out_dir):
    """Train the configured (K, Q) model; writes checkpoint, trace and summary."""
    os.makedirs(out_dir, exist_ok=True)
    (res,) = run_jobs(cfg, [(cfg, cfg.k, cfg.q, point_seed(cfg.seed, 0), None, True)])
    if "error" in res:
        write_csv(os.path.join(out_dir, "trace.csv"), TRACE_HEADER, trace_rows(res["trace"]))
        raise NumericFailure(res["error"])
    save_model(res["probe"], res["model"], os.path.join(out_dir, "model.blml"))
    write_csv(os.path.join(out_dir, "trace.csv"), TRACE_HEADER, trace_rows(res["trace"]))
    tr = res["trace"]
    write_json(os.path.join(out_dir, "train_summary.json"), summary(cfg, "train", {
        "k": cfg.k, "q": cfg.q, "epochs": len(tr),
        "val_eta_first": tr.val_eta[0], "val_eta_final": tr.val_eta[-1]}))
    return res["probe"], res["model"], tr


def run_convergence(cfg, kq_list, out_dir):
    """One model per (K, Q); emits ``convergence_K{k}_Q{q}.csv`` per setting."""
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(cfg, k, q, point_seed(cfg.seed, i), None, True) for i, (k, q) in enumerate(kq_list)]
    results = run_jobs(cfg, jobs)
    table = []
    for (k, q), res in zip(kq_list, results):
        write_csv(os.path.join(out_dir, f"convergence_K{k}_Q{q}.csv"), TRACE_HEADER,
                  trace_rows(res["trace"]))
        entry = {"k": k, "q": q, "epochs": len(res["trace"]), "error": res.get("error")}
        if len(res["trace"]):
            entry["final_val_eta"] = res["trace"].val_eta[-1]
        table.append(entry)
        if "error" in res:
            log.warning("setting (K=%d, Q=%d) failed: %s", k, q, res["error"])
    write_json(os.path.join(out_dir, "convergence.json"), summary(cfg, "convergence", table))
    return table, results


def run_ablation(cfg, out_dir):
    """Learned vs. fixed random vs. fixed DFT probing under the same decoder
    budget and seed.  ``mean_eta`` is the final validation mean eta;
    ``test_eta`` the deployment mean on the held-out split."""
    os.makedirs(out_dir, exist_ok=True)
    seed = point_seed(cfg.seed, 0)
    variants = (("learned", "dft", True), ("random", "random", False), ("dft", "dft", False))
    results = run_jobs(cfg, [(cfg, cfg.k, cfg.q, seed, init, tp) for _, init, tp in variants])
    data = site_data(cfg)
    rows, table = [], {}
    for (name, _, _), res in zip(variants, results):
        if "error" in res:
            log.warning("ablation %s failed: %s", name, res["error"])
            table[name] = {"error": res["error"]}
            continue
        val = res["trace"].val_eta[-1]
        test = float(np.mean([o.eta for o in _deploy(cfg, res, data)]))
        rows.append((name, val, test))
        table[name] = {"mean_eta": val, "test_eta": test, "first_val_eta": res["trace"].val_eta[0]}
    write_csv(os.path.join(out_dir, "ablation.csv"), ("probing", "mean_eta", "test_eta"), rows)
    write_json(os.path.join(out_dir, "ablation.json"), summary(cfg, "ablation", table))
    return table, results


def _deploy(cfg, res, data):
    out = []
    for sid, s in zip(data.test_ids, data.test.samples):
        out.append(export_deployment(res["probe"], res["model"], s.h, cfg.train.noise,
                                     seed=point_seed(cfg.seed + 1, sid)).with_link(cfg.link))
    return out


@dataclass
class SweepPoint:
    k: int
    q: int
    mean_eta: float
    overhead: int
    mean_effective_se: float
    pareto: bool = False

    def __post_init__(self):
        if self.overhead != self.k + 2 * self.q:
            raise ValueError("overhead must equal k + 2q")


def pareto_flags(points):
    """Mark points not dominated in (overhead lower, mean eta higher)."""
    for p in points:
        p.pareto = not any(
            (o.overhead <= p.overhead and o.mean_eta >= p.mean_eta)
            and (o.overhead < p.overhead or o.mean_eta > p.mean_eta)
            for o in points if o is not p)
    return points


def run_pareto(cfg, k_list, q_list, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    grid = [(k, q) for k in k_list for q in q_list if q <= cfg.site.n_t]
    if not grid:
        raise ValueError("empty (K, Q) grid")
    jobs = [(cfg, k, q, point_seed(cfg.seed, 100 + i), None, True) for i, (k, q) in enumerate(grid)]
    results = run_jobs(cfg, jobs)
    data = site_data(cfg)
    points, failed = [], []
    for (k, q), res in zip(grid, results):
        if "error" in res:
            failed.append({"k": k, "q": q, "error": res["error"]})
            continue
        outs = _deploy(cfg, res, data)
        points.append(SweepPoint(k, q, float(np.mean([o.eta for o in outs])), k + 2 * q,
                                 float(np.mean([o.effective_se for o in outs]))))
    pareto_flags(points)
    write_csv(os.path.join(out_dir, "pareto.csv"),
              ("k", "q", "overhead", "mean_eta", "mean_effective_se", "pareto"),
              [(p.k, p.q, p.overhead, p.mean_eta, p.mean_effective_se, p.pareto) for p in points])
    write_json(os.path.join(out_dir, "pareto.json"), summary(cfg, "pareto", {
        "points": [p.__dict__ for p in points], "failed": failed}))
    return points


def evaluate_schemes(cfg, probe, model, data):
    """Per-sample outcomes of every scheme on the test split (base link).

    Returns ``(records, skipped)`` with records ``(sample_id, scheme, q_or_np, outcome)``.
    """
    quant = dft_codebook(cfg.site.n_t, cfg.oversample)
    records, skipped = [], 0
    for sid, s in zip(data.test_ids, data.test.samples):
        try:
            row = [
                (sid, "type1", 1, type1(s.h, quant)),
                (sid, "type2", cfg.q, type2(s.h, quant, cfg.q)),
                (sid, "psc", cfg.n_p, psc(s.h, cfg.n_p)),
                (sid, "proposed", model.q, export_deployment(
                    probe, model, s.h, cfg.train.noise, seed=point_seed(cfg.seed + 1, sid))),
            ]
        except DegenerateChannelError:
            skipped += 1
            log.info("sample %d skipped: degenerate channel", sid)
            continue
        for rec in row:
            rec[3].with_link(cfg.link)
        records.extend(row)
    return records, skipped


def outcome_rows(records):
    return [(sid, name, qn, o.eta, o.rate_bps_hz, o.overhead_uses, o.effective_se, ";".join(o.flags))
            for sid, name, qn, o in records]


def snr_scale(cfg, data):
    """Factor mapping nominal SNR (dB) to rho: mean rho*||h||^2 over the test set."""
    energy = np.mean(np.sum(np.abs(data.test.channels()) ** 2, axis=1))
    return 1.0 / energy


def ecdf(values):
    x = np.sort(np.asarray(values, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


def run_eval(cfg, probe, model, out_dir, data=None):
    """Scheme outcomes on the test split at the configured link."""
    os.makedirs(out_dir, exist_ok=True)
    data = data or site_data(cfg)
    records, skipped = evaluate_schemes(cfg, probe, model, data)
    write_csv(os.path.join(out_dir, "outcomes.csv"), OUTCOME_COLUMNS, outcome_rows(records))
    with open(os.path.join(out_dir, "outcomes.jsonl"), "w", encoding="utf-8") as fh:
        for row in outcome_rows(records):
            rec = dict(zip(OUTCOME_COLUMNS, row))
            rec["flags"] = [f for f in rec["flags"].split(";") if f]
            fh.write(json.dumps(_jsonable(rec), sort_keys=False) + "\n")
    table = {}
    for name in ("type1", "type2", "psc", "proposed"):
        outs = [o for _, n, _, o in records if n == name]
        table[name] = {"mean_eta": float(np.mean([o.eta for o in outs])),
                       "mean_effective_se": float(np.mean([o.effective_se for o in outs])),
                       "overhead": outs[0].overhead_uses if outs else None,
                       "count": len(outs)}
    table["skipped"] = skipped
    write_json(os.path.join(out_dir, "eval_summary.json"), summary(cfg, "eval", table))
    return table, records


def run_comparison(cfg, probe, model, out_dir):
    """Summary table, SE-vs-SNR sweep and per-scheme effective-SE CDFs."""
    data = site_data(cfg)
    table, records = run_eval(cfg, probe, model, out_dir, data)
    scale = snr_scale(cfg, data)
    schemes = ("type1", "type2", "psc", "proposed")
    rows = []
    t_c = cfg.link.t_c
    by_scheme = {n: [o for _, m, _, o in records if m == n] for n in schemes}
    cdf_vals = {}
    for snr in cfg.snr_db:
        rho = scale * 10.0 ** (snr / 10.0)
        row = [snr]
        for n in schemes:
            se = [effective_se(o.captured, o.overhead_uses + cfg.link.t_ssb, t_c, rho)
                  for o in by_scheme[n]]
            row.append(float(np.mean(se)))
        rows.append(row)
    rho_cdf = scale * 10.0 ** (cfg.cdf_snr_db / 10.0)
    for n in schemes:
        cdf_vals[n] = [effective_se(o.captured, o.overhead_uses + cfg.link.t_ssb, t_c, rho_cdf)
                       for o in by_scheme[n]]
        x, f = ecdf(cdf_vals[n])
        write_csv(os.path.join(out_dir, f"cdf_{n}.csv"), ("effective_se_bps_hz", "cdf"), zip(x, f))
    write_csv(os.path.join(out_dir, "se_vs_snr.csv"),
              ("snr_db",) + tuple(f"{n}_se_bps_hz" for n in schemes), rows)
    table["snr_scale"] = scale
    write_json(os.path.join(out_dir, "compare_summary.json"), summary(cfg, "compare", table))
    return table


def local_maxima(g):
    """Indices of circular local maxima (plateaus count once, at their first bin)."""
    n = g.size
    out = []
    for i in range(n):
        if g[i] > g[(i - 1) % n] and g[i] >= g[(i + 1) % n]:
            out.append(i)
    return np.array(out, dtype=int)


def run_angular(cfg, probe, model, sample_ids, out_dir):
    """Normalized ``a(u)^H P a(u)`` for proposed/type1/type2 plus path markers."""
    os.makedirs(out_dir, exist_ok=True)
    data = site_data(cfg)
    quant = dft_codebook(cfg.site.n_t, cfg.oversample)
    written = []
    for sid in sample_ids:
        if not 0 <= sid < len(data.test):
            raise ValueError(f"sample id {sid} outside test split of {len(data.test)}")
        s = data.test.samples[sid]
        prop = export_deployment(probe, model, s.h, cfg.train.noise,
                                 seed=point_seed(cfg.seed + 1, data.test_ids[sid]))
        subs = {
            "proposed": outcome_subspace(prop),
            "type1": beam_subspace(type1(s.h, quant).w_hat),
            "type2": outcome_subspace(type2(s.h, quant, cfg.q), quant),
        }
        cols = {}
        for name, sub in subs.items():
            u, g = angular_response(sub, cfg.grid_points, normalize=True)
            cols[name] = g
        header = ["u", "proposed", "type1", "type2"]
        rows = [[u[i]] + [cols[n][i] for n in header[1:]] for i in range(u.size)]
        path = os.path.join(out_dir, f"angular_{sid}.csv")
        write_csv(path, header, rows)
        written.append(path)
        if s.has_paths:
            p = np.abs(s.paths.gains) ** 2
            write_csv(os.path.join(out_dir, f"angular_{sid}_paths.csv"), ("u", "path_power"),
                      zip(s.paths.spatial_freqs, p / p.max()))
    write_json(os.path.join(out_dir, "angular.json"), summary(cfg, "angular", {
        "samples": list(sample_ids), "files": [os.path.basename(p) for p in written]}))
    return written
