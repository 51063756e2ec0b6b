"""Experiment runner: initial training, noisy-stream adaptation, ablations, reports."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import CLIP_SAMPLES
from .audio import (AudioClip, MixSpec, NoiseRecording, load_demand, load_gscd, mix_at_snr, power,
                    random_offset, saturate16, snr_gain, synth_noise_recordings, synth_test_corpus)
from .checkpoint import artifacts_to_bytes, load_model, load_state, pairs_from_bytes, pairs_to_bytes, save_model, save_state
from .cl import CLConfig, CLState, IntervalMetrics, RehearsalBuffer, continual_update, evaluate_interval, initial_state, run_deployment
from .config import ExperimentConfig, dump_config, load_config, parse_config_text, from_mapping
from .errors import DatasetError, UsageError
from .nn import TrainConfig, accuracy, init_model, train_arrays
from .pipeline import FrontEnd, process_clips
from .quant import QuantizedModel, calibrate, confidence_threshold_q, quantize_model, quantized_inference_batch

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["run", "environment", "snr_db", "interval_index", "n_inputs", "accuracy",
                   "n_effective_accepted", "n_rejected_conf", "n_rejected_dist", "mean_confidence"]
SUMMARY_COLUMNS = ["environment", "snr_db", "final_accuracy", "mean_accuracy", "baseline_accuracy",
                   "clean_before", "clean_after", "n_updates"]
ABLATION_COLUMNS = ["sweep", "value", "environment", "snr_db", "final_accuracy", "mean_accuracy",
                    "eval_accuracy", "clean_after"]
SWEEPS = ("alpha", "prob_threshold", "dist_threshold", "components")


# ---------------------------------------------------------------------------
# data


@dataclass
class Dataset:
    train: list[AudioClip]
    test: list[AudioClip]
    noises: dict[str, NoiseRecording]


def load_dataset(cfg: ExperimentConfig, need_noise: bool = True) -> Dataset:
    if cfg.dataset == "synthetic":
        noises = synth_noise_recordings(cfg.seed + 2, cfg.noise_duration_s) if need_noise else {}
        return Dataset(synth_test_corpus(cfg.n_train_per_class, cfg.seed),
                       synth_test_corpus(cfg.n_test_per_class, cfg.seed + 1), noises)
    if not cfg.gscd_dir or not Path(cfg.gscd_dir).is_dir():
        raise DatasetError(f"GSCD directory not found: {cfg.gscd_dir!r}")
    split = load_gscd(cfg.gscd_dir)
    if not split.train or not split.test:
        raise DatasetError("GSCD tree has no yes/no clips in one of the splits")
    noises = {}
    if need_noise:
        if not cfg.demand_dir or not Path(cfg.demand_dir).is_dir():
            raise DatasetError(f"DEMAND directory not found: {cfg.demand_dir!r}")
        noises = load_demand(cfg.demand_dir, cfg.environments)
    return Dataset(split.train, split.test, noises)


def cell_seed(seed: int, env: str, snr_db: float) -> int:
    return (seed * 1_000_003 + zlib.crc32(f"{env}:{snr_db:g}".encode())) % (2 ** 32)


def scaled_noise(rec: NoiseRecording, rng, p_ref: float, snr_db: float) -> AudioClip:
    """One clip-length noise segment at the level a mix at ``snr_db`` would have."""
    seg = rec.segment(random_offset(rng, rec), CLIP_SAMPLES).astype(np.float64)
    g = snr_gain(p_ref, power(seg), snr_db)
    return AudioClip(saturate16(g * seg), label="noise")


def build_stream(pool: list[AudioClip], rec: NoiseRecording, snr_db: float, n_intervals: int,
                 interval: int, n_yes: int, n_no: int, seed: int) -> list[AudioClip]:
    """Shuffled intervals of noisy keywords plus noise-only inputs.

    Keywords are mixed at ``snr_db`` with random noise offsets; noise-only
    inputs are scaled to the level used for an average-power keyword.
    """
    rng = np.random.default_rng(seed)
    yes = [c for c in pool if c.label == "yes"]
    no = [c for c in pool if c.label == "no"]
    if (n_yes and not yes) or (n_no and not no):
        raise DatasetError("keyword pool lacks one class")
    p_ref = float(np.mean([power(c.samples) for c in pool]))
    stream = []
    for _ in range(n_intervals):
        items = []
        for src, n in ((yes, n_yes), (no, n_no)):
            for i in rng.choice(len(src), n, replace=len(src) < n):
                off = random_offset(rng, rec, len(src[i]))
                items.append(mix_at_snr(src[i], rec, MixSpec(snr_db, off / 16000)))
        items += [scaled_noise(rec, rng, p_ref, snr_db) for _ in range(interval - n_yes - n_no)]
        stream += [items[i] for i in rng.permutation(len(items))]
    return stream


def noisy_eval_set(pool, rec, snr_db, per_class, seed) -> list[AudioClip]:
    rng = np.random.default_rng(seed)
    out = []
    for label in ("yes", "no"):
        src = [c for c in pool if c.label == label]
        for i in rng.choice(len(src), per_class, replace=len(src) < per_class):
            off = random_offset(rng, rec, len(src[i]))
            out.append(mix_at_snr(src[i], rec, MixSpec(snr_db, off / 16000)))
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedBundle:
    model: object
    qm: QuantizedModel
    rehearsal: RehearsalBuffer
    report: dict


TRAIN_NOISE_SEED = 7919  # kept apart from every evaluation noise seed


def noise_calibration_clips(train_clips, n: int, seed: int) -> list[AudioClip]:
    """Noise-only clips across the synthetic environments at -10..10 dB re keyword level.

    Training them towards probability 0.5 keeps the model unsure on
    keyword-free input, so the confidence gate rejects it at deployment.
    """
    if n <= 0:
        return []
    rng = np.random.default_rng([seed, TRAIN_NOISE_SEED])
    recs = list(synth_noise_recordings(int(rng.integers(2**31)), 30.0).values())
    p_ref = float(np.mean([power(c.samples) for c in train_clips]))
    return [scaled_noise(recs[i % len(recs)], rng, p_ref, float(rng.uniform(-10, 10))) for i in range(n)]


def train_initial(train_clips, test_clips, cfg: ExperimentConfig) -> TrainedBundle:
    fe = cfg.cl.front_end
    raw_m, raw_l, y = process_clips(train_clips, fe, denoise=False)
    xm, xl = fe.denoise(raw_m), fe.denoise(raw_l)
    noise = noise_calibration_clips(train_clips, cfg.train_noise_clips, cfg.seed)
    if noise:
        nm, nl, _ = process_clips(noise, fe)
        targets = np.concatenate([y, np.full(len(noise), 0.5)])
        fit_m, fit_l = np.concatenate([xm, nm]), np.concatenate([xl, nl])
    else:
        targets, fit_m, fit_l = y, xm, xl
    model = init_model("dual", cfg.seed)
    tcfg = TrainConfig(cfg.train_learning_rate, cfg.train_epochs, cfg.train_batch_size,
                       cfg.seed, cfg.train_optimizer)
    model, losses = train_arrays(model, fit_m, fit_l, targets, tcfg)
    if cfg.qat_epochs:
        model, qat_losses = train_arrays(model, fit_m, fit_l, targets,
                                         replace(tcfg, epochs_per_update=cfg.qat_epochs, fake_quant=True))
        losses += qat_losses
    qm = quantize_model(model, calibrate(model, fit_m, fit_l))
    rehearsal = RehearsalBuffer.select(raw_m, raw_l, y, cfg.cl.rehearsal_per_class, cfg.seed)
    tm, tl, ty = process_clips(test_clips, fe)
    report = {
        "clean_accuracy_float": accuracy(model, tm, tl, ty),
        "clean_accuracy_int8": float(np.mean(quantized_inference_batch(qm, tm, tl).cls == ty)),
        "train_loss": losses,
        "n_train": len(y),
        "n_test": len(ty),
    }
    return TrainedBundle(model, qm, rehearsal, report)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_train(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Train, quantize and write a checkpoint directory; returns the report."""
    out = Path(out_dir or Path(cfg.output_dir) / "checkpoint")
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(cfg, need_noise=False)
    bundle = train_initial(data.train, data.test, cfg)
    save_model(out / "model.kws", bundle.model)
    save_model(out / "qmodel.kws", bundle.qm)
    rb = bundle.rehearsal
    (out / "rehearsal.buf").write_bytes(pairs_to_bytes(rb.mfcc, rb.logmel, rb.labels))
    state = initial_state(bundle.model, rb, cfg.cl, bundle.qm)
    (out / "artifacts.bin").write_bytes(artifacts_to_bytes(state.artifacts))
    (out / "config.txt").write_text(dump_config(cfg))
    report = dict(bundle.report)
    report["model_sha256"] = sha256(out / "model.kws")
    report["qmodel_sha256"] = sha256(out / "qmodel.kws")
    (out / "train.json").write_text(json.dumps(report, indent=2))
    logger.info("clean accuracy float %.4f int8 %.4f", report["clean_accuracy_float"],
                report["clean_accuracy_int8"])
    return report


def load_checkpoint(ckpt_dir, cfg: CLConfig) -> CLState:
    d = Path(ckpt_dir)
    if not (d / "qmodel.kws").exists():
        raise DatasetError(f"no checkpoint in {d}")
    model = load_model(d / "model.kws")
    qm = load_model(d / "qmodel.kws")
    rehearsal = RehearsalBuffer(*pairs_from_bytes((d / "rehearsal.buf").read_bytes()))
    return initial_state(model, rehearsal, cfg, qm)


# ---------------------------------------------------------------------------
# adaptation


@dataclass
class CellResult:
    environment: str
    snr_db: float
    adapted: list[IntervalMetrics]
    baseline: list[IntervalMetrics]
    clean_before: float
    clean_after: float
    n_updates: int = 0
    state: CLState | None = None

    @property
    def final_accuracy(self) -> float:
        return self.adapted[-1].accuracy

    @property
    def mean_accuracy(self) -> float:
        return _pooled(self.adapted)

    @property
    def baseline_accuracy(self) -> float:
        return _pooled(self.baseline)

    def summary(self) -> dict:
        return {"environment": self.environment, "snr_db": self.snr_db,
                "final_accuracy": self.final_accuracy, "mean_accuracy": self.mean_accuracy,
                "baseline_accuracy": self.baseline_accuracy, "clean_before": self.clean_before,
                "clean_after": self.clean_after, "n_updates": self.n_updates}


def _pooled(history) -> float:
    n = sum(h.n_keywords for h in history)
    return sum(h.n_correct for h in history) / n if n else float("nan")


def clean_accuracy(qm, clean_feats) -> float:
    tm, tl, ty = clean_feats
    return float(np.mean(quantized_inference_batch(qm, tm, tl).cls == ty))


def initial_adaptation(state: CLState, rec: NoiseRecording, pool, snr_db, cfg: ExperimentConfig, seed: int) -> CLState:
    """Feature-mixing update before deployment: rehearsal + augmented rehearsal only."""
    rng = np.random.default_rng(seed)
    p_ref = float(np.mean([power(c.samples) for c in pool]))
    noise = [scaled_noise(rec, rng, p_ref, snr_db) for _ in range(8)]
    return continual_update(state, [], noise, cfg.cl)


def run_cell(cfg: ExperimentConfig, start: CLState, data: Dataset, env: str, snr_db: float,
             adapt: bool = True, state_dir=None, resume_from: int | None = None, clean_feats=None,
             frozen: CLState | None = None) -> CellResult:
    """Adapt ``start`` on one environment x SNR stream.

    ``frozen`` (default ``start``) supplies the no-adaptation baseline and the
    clean-accuracy reference. ``resume_from`` continues a snapshot at that
    interval without repeating the initial adaptation.
    """
    seed = cell_seed(cfg.seed, env, snr_db)
    rec = data.noises[env]
    stream = build_stream(data.test, rec, snr_db, cfg.n_intervals, cfg.cl.interval,
                          cfg.n_yes, cfg.n_no, seed)
    if clean_feats is None:
        clean_feats = process_clips(data.test, cfg.cl.front_end)
    frozen = frozen or start
    clean_before = clean_accuracy(frozen.qm, clean_feats)
    baseline = []

    def on_interval(k, mfcc, logmel, labels):
        m, _ = evaluate_interval(frozen, mfcc, logmel, labels, cfg.cl, k, counter=None)
        baseline.append(m)

    def on_update(state, k):
        if state_dir is not None:
            save_state(state_dir, state, {"environment": env, "snr_db": snr_db,
                                          "intervals_done": k + 1, "config": dump_config(cfg)})

    state = start
    if adapt and resume_from is None:
        state = initial_adaptation(start, rec, data.test, snr_db, cfg, seed + 1)
        on_update(state, -1)
    state, history = run_deployment(state, stream, cfg.cl, on_interval=on_interval,
                                    on_update=on_update, start_interval=resume_from or 0, adapt=adapt)
    return CellResult(env, snr_db, history, baseline, clean_before,
                      clean_accuracy(state.qm, clean_feats), state.updates, state)


def metrics_rows(cell: CellResult) -> list[dict]:
    rows = []
    for run, hist in (("adapted", cell.adapted), ("baseline", cell.baseline)):
        for h in hist:
            rows.append({"run": run, "environment": cell.environment, "snr_db": cell.snr_db,
                         "interval_index": h.interval_index, "n_inputs": h.n_inputs,
                         "accuracy": h.accuracy, "n_effective_accepted": h.n_accepted,
                         "n_rejected_conf": h.n_rejected_conf, "n_rejected_dist": h.n_rejected_dist,
                         "mean_confidence": h.mean_confidence})
    return rows


def validate_metrics_row(row: dict) -> None:
    counts = int(row["n_effective_accepted"]) + int(row["n_rejected_conf"]) + int(row["n_rejected_dist"])
    if counts != int(row["n_inputs"]):
        raise ValueError(f"counts {counts} do not sum to {row['n_inputs']}")
    acc = float(row["accuracy"])
    if not (np.isnan(acc) or 0.0 <= acc <= 1.0):
        raise ValueError(f"accuracy {acc} outside [0, 1]")


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as f:
        return list(csv.DictReader(f))


def _cell_job(args):
    cfg, ckpt_dir, env, snr, out = args
    data = load_dataset(cfg)
    start = load_checkpoint(ckpt_dir, cfg.cl)
    cell = run_cell(cfg, start, data, env, snr, state_dir=out / "state" / f"{env}_{snr:g}")
    cell.state = None
    return cell


def cmd_adapt_eval(cfg: ExperimentConfig, ckpt_dir=None, out_dir=None) -> list[CellResult]:
    """Run every environment x SNR cell; writes metrics.csv and summary.csv."""
    out = Path(out_dir or cfg.output_dir)
    ckpt_dir = Path(ckpt_dir or out / "checkpoint")
    jobs = [(cfg, ckpt_dir, env, snr, out) for env in cfg.environments for snr in cfg.snrs_db]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        data = load_dataset(cfg)
        start = load_checkpoint(ckpt_dir, cfg.cl)
        clean_feats = process_clips(data.test, cfg.cl.front_end)
        cells = []
        for _, _, env, snr, _ in jobs:
            logger.info("adapting %s at %g dB", env, snr)
            cells.append(run_cell(cfg, start, data, env, snr, clean_feats=clean_feats,
                                  state_dir=out / "state" / f"{env}_{snr:g}"))
    write_outputs(out, cells)
    return cells


def write_outputs(out: Path, cells: list[CellResult]) -> None:
    rows = [r for c in cells for r in metrics_rows(c)]
    for r in rows:
        validate_metrics_row(r)
    write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, [c.summary() for c in cells])


def cmd_resume(state_dir, ckpt_dir=None, out_dir=None) -> CellResult:
    """Continue one environment x SNR cell from its last snapshot."""
    state, meta = load_state(state_dir)
    cfg = from_mapping(parse_config_text(meta["config"]))
    out = Path(out_dir or cfg.output_dir)
    data = load_dataset(cfg)
    env, snr = meta["environment"], float(meta["snr_db"])
    if int(meta["intervals_done"]) >= cfg.n_intervals:
        raise UsageError(f"{env} at {snr:g} dB already finished all {cfg.n_intervals} intervals")
    ckpt_dir = Path(ckpt_dir or out / "checkpoint")
    frozen = load_checkpoint(ckpt_dir, cfg.cl)
    return run_cell(cfg, state, data, env, snr, state_dir=state_dir,
                    resume_from=int(meta["intervals_done"]), frozen=frozen)


# ---------------------------------------------------------------------------
# ablations


def sweep_values(sweep: str) -> list[tuple[str, dict, bool]]:
    """(label, CLConfig changes, adapt) for every point of a sweep."""
    if sweep == "alpha":
        return [(f"{a:.1f}", {"alpha": round(a, 1)}, True) for a in np.arange(0.4, 0.95, 0.1)]
    if sweep == "prob_threshold":
        return [(f"{p:.2f}", {"confidence_threshold_q": confidence_threshold_q(round(p, 2))}, True)
                for p in np.arange(0.70, 0.851, 0.05)]
    if sweep == "dist_threshold":
        return [(f"{n:.1f}", {"n_sigma": round(n, 1)}, True) for n in np.arange(1.7, 2.45, 0.1)]
    if sweep == "components":
        # denoising alone vs. with retraining, each with and without the wavelet stage
        return [("spectral", {"wavelet": False, "spectral": True}, False),
                ("wavelet+spectral", {"wavelet": True, "spectral": True}, False),
                ("retrain+spectral", {"wavelet": False, "spectral": True}, True),
                ("retrain+wavelet+spectral", {"wavelet": True, "spectral": True}, True)]
    raise UsageError(f"unknown sweep {sweep!r}; expected one of {', '.join(SWEEPS)}")


def run_ablation(cfg: ExperimentConfig, sweep: str, data: Dataset | None = None) -> list[dict]:
    """Evaluate every sweep point on every environment x SNR cell.

    Streams and eval sets depend only on the seed, so sweep points see
    identical inputs. One initial model is trained per wavelet/spectral
    setting at the configured alpha; swept alphas only change the deployed
    front end and the continual updates.
    """
    points = sweep_values(sweep)
    data = data or load_dataset(cfg)
    trained = {}
    rows = []
    for label, changes, adapt in points:
        pcfg = cfg.with_cl(**changes)
        fe = pcfg.cl.front_end
        tcfg = pcfg.with_cl(alpha=cfg.cl.alpha)
        key = tcfg.cl.front_end
        if key not in trained:
            trained[key] = train_initial(data.train, data.test, tcfg)
        bundle = trained[key]
        start = initial_state(bundle.model, bundle.rehearsal, pcfg.cl, bundle.qm)
        clean_feats = process_clips(data.test, fe)
        for env in cfg.environments:
            for snr in cfg.snrs_db:
                cell = run_cell(pcfg, start, data, env, snr, adapt=adapt, clean_feats=clean_feats)
                ev = noisy_eval_set(data.test, data.noises[env], snr, cfg.eval_per_class,
                                    cell_seed(cfg.seed + 7, env, snr))
                em, el, ey = process_clips(ev, fe)
                eval_acc = float(np.mean(quantized_inference_batch(cell.state.qm, em, el).cls == ey))
                rows.append({"sweep": sweep, "value": label, "environment": env, "snr_db": snr,
                             "final_accuracy": cell.final_accuracy, "mean_accuracy": cell.mean_accuracy,
                             "eval_accuracy": eval_acc, "clean_after": cell.clean_after})
                logger.info("%s=%s %s %g dB: eval %.4f", sweep, label, env, snr, eval_acc)
    return rows


def cmd_ablate(cfg: ExperimentConfig, sweep: str, out_dir=None) -> list[dict]:
    if sweep not in SWEEPS:
        raise UsageError(f"unknown sweep {sweep!r}; expected one of {', '.join(SWEEPS)}")
    rows = run_ablation(cfg, sweep)
    write_csv(Path(out_dir or cfg.output_dir) / f"ablation_{sweep}.csv", ABLATION_COLUMNS, rows)
    return rows


def sweep_spread(rows: list[dict], metric: str = "eval_accuracy") -> dict[tuple, float]:
    """max - min of ``metric`` across sweep values, per (environment, snr)."""
    cells = {}
    for r in rows:
        cells.setdefault((r["environment"], float(r["snr_db"])), []).append(float(r[metric]))
    return {k: max(v) - min(v) for k, v in cells.items()}


# ---------------------------------------------------------------------------
# report


def summary_grid(rows: list[dict], metric: str = "final_accuracy"):
    """Environment x SNR grid of ``metric``; missing cells are None."""
    envs = sorted({r["environment"] for r in rows})
    snrs = sorted({float(r["snr_db"]) for r in rows})
    grid = {e: {s: None for s in snrs} for e in envs}
    acc = {}
    for r in rows:
        acc.setdefault((r["environment"], float(r["snr_db"])), []).append(float(r[metric]))
    for (e, s), vals in acc.items():
        grid[e][s] = float(np.mean(vals))
    return envs, snrs, grid


def render_grid(envs, snrs, grid, title: str = "") -> str:
    head = ["environment"] + [f"{s:g} dB" for s in snrs]
    body = [[e] + ["-" if grid[e][s] is None else f"{100 * grid[e][s]:.2f}" for s in snrs] for e in envs]
    widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
    lines = [title] if title else []
    for row in [head] + body:
        lines.append("  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])
                               for i, c in enumerate(row)))
    return "\n".join(lines) + "\n"


def cmd_report(metrics_dir, plot: bool = False) -> str:
    d = Path(metrics_dir)
    summaries = sorted(d.rglob("summary.csv")) if d.is_dir() else []
    ablations = sorted(d.rglob("ablation_*.csv")) if d.is_dir() else []
    if not summaries and not ablations:
        raise UsageError(f"no metrics CSVs under {d}")
    out = []
    rows = [r for p in summaries for r in read_csv(p)]
    if rows:
        for metric, title in (("final_accuracy", "final-interval accuracy (%)"),
                              ("mean_accuracy", "mean accuracy over intervals (%)"),
                              ("baseline_accuracy", "no-adaptation baseline (%)")):
            out.append(render_grid(*summary_grid(rows, metric), title=title))
    for p in ablations:
        arows = read_csv(p)
        sweep = arows[0]["sweep"] if arows else p.stem
        envs = sorted({r["environment"] for r in arows})
        values = list(dict.fromkeys(r["value"] for r in arows))
        for env in envs:
            sub = [r for r in arows if r["environment"] == env]
            grid = {v: {} for v in values}
            snrs = sorted({float(r["snr_db"]) for r in sub})
            for v in values:
                for s in snrs:
                    grid[v][s] = None
            for r in sub:
                grid[r["value"]][float(r["snr_db"])] = float(r["eval_accuracy"])
            out.append(render_grid(values, snrs, grid, title=f"{sweep} sweep, {env} (eval accuracy %)"))
        if plot:
            _plot_ablation(arows, p.with_suffix(".png"))
    text = "\n".join(out)
    (d / "report.txt").write_text(text)
    return text


def _plot_ablation(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted({(r["environment"], float(r["snr_db"])) for r in rows})
    for env, snr in keys:
        sub = [r for r in rows if r["environment"] == env and float(r["snr_db"]) == snr]
        ax.plot([r["value"] for r in sub], [100 * float(r["eval_accuracy"]) for r in sub],
                marker="o", label=f"{env} {snr:g} dB")
    ax.set_xlabel(rows[0]["sweep"])
    ax.set_ylabel("accuracy (%)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def config_from_args(path=None, **overrides) -> ExperimentConfig:
    cfg = load_config(path) if path else ExperimentConfig()
    values = {k: v for k, v in overrides.items() if v is not None}
    return from_mapping(values, cfg) if values else cfg


def cell_asdict(cell: CellResult) -> dict:
    return {"summary": cell.summary(), "adapted": [asdict(h) for h in cell.adapted]}
