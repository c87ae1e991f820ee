"""Command-line entry point: synth / train / calibrate / evaluate /
stress / ablate, driven by a key=value config file with flag overrides.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    CONTINUOUS,
    DISCRETE,
    Sequence,
    SequenceDataset,
    SplitSpec,
    dataset_from_events,
    load_events,
    load_series,
    temporal_split,
    window_continuous,
)
from .errors import ConfigError, DataError, NumericalError, SeqgateError
from .experiments import ablation_suite, evaluate, multi_seed_run
from .gate import calibrate_threshold, min_distances
from .hybrid import GatedHybridPredictor
from .persistence import load_bundle, save_bundle
from .synth import SynthSpec, gen_dataset, gen_shifted

WORKERS_ENV = "SEQGATE_WORKERS"

# Sub-seed derivation from the root synthetic seed: fresh validation and
# test corpora sample with seed+1 and seed+2, stress corpora with seed+3.
VAL_SEED_OFFSET = 1
TEST_SEED_OFFSET = 2
STRESS_SEED_OFFSET = 3


@dataclass
class RunConfig:
    dataset: str = "synthetic"
    format: str = "events"  # events | series | windows (file datasets)
    mode: str = DISCRETE
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    window: int = 20
    difference: bool = False
    normalize: bool = True
    embed_dim: int = 32
    hidden_dim: int = 64
    epochs: int = 5
    batch_size: int = 256
    learning_rate: float = 0.001
    optimizer: str = "sgd"
    clip_norm: float = 5.0
    n_archetypes: int = 5
    alpha: float = 1.0
    theta: float | None = None  # absent means "calibrate"
    hybrid_weight: float = 0.5
    phase0_max_len: int = 3
    phase1_max_len: int = 10
    popularity_weight: float = 0.5
    grid_lo: float = 0.2
    grid_hi: float = 0.6
    grid_step: float = 0.1
    seed: int = 0
    seeds: tuple = (0,)
    workers: int = 0  # 0 -> env var or 1
    outdir: str = "runs/out"
    synth_items: int = 50
    synth_archetypes: int = 3
    synth_sequences: int = 2000
    synth_len_min: int = 12
    synth_len_max: int = 30
    synth_concentration: float = 0.85
    synth_ar_coef: float = 0.8
    synth_noise: float = 0.25
    synth_level_shift: float = 5.0

    _BOOL = {"difference", "normalize"}
    _INT = {
        "window", "embed_dim", "hidden_dim", "epochs", "batch_size",
        "n_archetypes", "phase0_max_len", "phase1_max_len", "seed", "workers",
        "synth_items", "synth_archetypes", "synth_sequences",
        "synth_len_min", "synth_len_max",
    }
    _FLOAT = {
        "train_frac", "val_frac", "test_frac", "learning_rate", "clip_norm",
        "alpha", "theta", "hybrid_weight", "popularity_weight",
        "grid_lo", "grid_hi", "grid_step", "synth_concentration",
        "synth_ar_coef", "synth_noise", "synth_level_shift",
    }

    def set_key(self, key: str, value: str):
        if not hasattr(self, key) or key.startswith("_"):
            raise ConfigError(f"unknown config key '{key}'")
        if key == "seeds":
            self.seeds = parse_seed_range(value)
        elif key in self._BOOL:
            lowered = value.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"bad boolean for '{key}': {value}")
            setattr(self, key, lowered in ("true", "1", "yes"))
        elif key in self._INT:
            setattr(self, key, int(value))
        elif key in self._FLOAT:
            setattr(self, key, float(value))
        else:
            setattr(self, key, value.strip())

    @property
    def effective_workers(self) -> int:
        if self.workers > 0:
            return self.workers
        env = os.environ.get(WORKERS_ENV, "")
        return int(env) if env.isdigit() and int(env) > 0 else 1

    def predictor_params(self) -> dict:
        return dict(
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            clip_norm=self.clip_norm,
            n_archetypes=self.n_archetypes,
            alpha=self.alpha,
            theta=self.theta if self.theta is not None else 0.4,
            hybrid_weight=self.hybrid_weight,
            phase0_max_len=self.phase0_max_len,
            phase1_max_len=self.phase1_max_len,
            popularity_weight=self.popularity_weight,
        )

    def synth_spec(self, sample_seed: int | None = None, mode: str | None = None) -> SynthSpec:
        return SynthSpec(
            mode=mode or self.mode,
            n_items=self.synth_items,
            n_archetypes=self.synth_archetypes,
            n_sequences=self.synth_sequences,
            len_range=(self.synth_len_min, self.synth_len_max),
            concentration=self.synth_concentration,
            ar_coef=self.synth_ar_coef,
            noise=self.synth_noise,
            level_shift=self.synth_level_shift,
            seed=self.seed,
            sample_seed=sample_seed,
        )


def parse_seed_range(text: str) -> tuple:
    """Accept '0..29', '3', or '0,2,5'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    if "," in text:
        return tuple(int(t) for t in text.split(",") if t.strip())
    return (int(text),)


def parse_config_file(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    cfg = RunConfig()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        try:
            cfg.set_key(key, value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return cfg


def load_run_config(args) -> RunConfig:
    cfg = parse_config_file(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        cfg.set_key(key.strip(), value.strip())
    if getattr(args, "seeds", None):
        cfg.seeds = parse_seed_range(args.seeds)
    if getattr(args, "outdir", None):
        cfg.outdir = args.outdir
    if getattr(args, "theta", None) is not None:
        cfg.theta = args.theta
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


# ----------------------------------------------------------------------
# data loading


def _stage(name: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except SeqgateError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def load_windows_file(path) -> SequenceDataset:
    """One whitespace-separated window per line (synthetic corpus dumps)."""
    path = Path(path)
    seqs = []
    with path.open() as fh:
        for i, line in enumerate(fh):
            tokens = line.split()
            if not tokens:
                continue
            seqs.append(Sequence(owner=i, values=[float(t) for t in tokens]))
    if not seqs:
        raise DataError("empty dataset")
    return SequenceDataset(CONTINUOUS, seqs)


def load_splits(cfg: RunConfig):
    """(train, val, test) datasets for the configured source.

    Synthetic corpora draw three independent samples of the same process
    (sample seeds seed, seed+1, seed+2); file datasets are split
    chronologically per the configured fractions.
    """
    if cfg.dataset == "synthetic":
        train, _ = gen_dataset(cfg.synth_spec())
        val, _ = gen_dataset(cfg.synth_spec(sample_seed=cfg.seed + VAL_SEED_OFFSET))
        test, _ = gen_dataset(cfg.synth_spec(sample_seed=cfg.seed + TEST_SEED_OFFSET))
        return train, val, test
    spec = SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac)
    if cfg.format == "events":
        ds = dataset_from_events(load_events(cfg.dataset))
        return temporal_split(ds, spec)
    if cfg.format == "series":
        series = load_series(cfg.dataset)
        n = series.shape[0]
        n_train = int(n * cfg.train_frac)
        n_val = int(n * (cfg.train_frac + cfg.val_frac)) - n_train
        chunks = (series[:n_train], series[n_train : n_train + n_val],
                  series[n_train + n_val :])
        train = window_continuous(chunks[0], cfg.window, cfg.normalize, cfg.difference)
        stats = train.norm_stats
        others = []
        for chunk in chunks[1:]:
            if chunk.shape[0] > cfg.window + (1 if cfg.difference else 0):
                others.append(window_continuous(chunk, cfg.window, cfg.normalize,
                                                cfg.difference, stats=stats))
            else:
                others.append(SequenceDataset(CONTINUOUS, [], norm_stats=stats))
        return train, others[0], others[1]
    if cfg.format == "windows":
        ds = load_windows_file(cfg.dataset)
        return temporal_split(ds, spec)
    raise ConfigError(f"unknown dataset format '{cfg.format}'")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bundle_path(cfg: RunConfig) -> Path:
    return _outdir(cfg) / "bundle.model"


# ----------------------------------------------------------------------
# report writers


def _write_tsv(path: Path, header, rows):
    with path.open("w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def _metric_rows(baseline, hybrid):
    rows = []
    base, hyb = baseline.flat(), hybrid.flat()
    for key in base:
        b, h = base[key], hyb[key]
        rel = (h - b) / b * 100.0 if b != 0 else float("nan")
        rows.append((key, f"{b:.6f}", f"{h:.6f}", f"{rel:+.2f}"))
    return rows


# ----------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = load_run_config(args)
    out = _outdir(cfg)
    ds, labels = _stage("generate", gen_dataset, cfg.synth_spec())
    if cfg.mode == DISCRETE:
        path = out / "events.tsv"
        with path.open("w") as fh:
            fh.write("user\titem\ttimestamp\n")
            for s in ds.sequences:
                for pos, item in enumerate(s.items.tolist()):
                    fh.write(f"{s.owner}\t{item}\t{pos}\n")
    else:
        path = out / "windows.tsv"
        with path.open("w") as fh:
            for s in ds.sequences:
                fh.write("\t".join(f"{v:.10g}" for v in s.values.tolist()) + "\n")
    np.savetxt(out / "labels.tsv", labels, fmt="%d")
    print(f"wrote {path} ({len(ds.sequences)} sequences) and labels.tsv")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    train, _, _ = _stage("load_data", load_splits, cfg)
    predictor = GatedHybridPredictor(**cfg.predictor_params(), seed=cfg.seed)
    _stage("train", predictor.fit, train)
    path = _stage("persist", save_bundle, predictor, _bundle_path(cfg))
    print(f"trained on {len(train.sequences)} sequences; bundle at {path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = load_run_config(args)
    predictor = _stage("load_bundle", load_bundle, _bundle_path(cfg))
    _, val, _ = _stage("load_data", load_splits, cfg)
    if not val.sequences:
        raise DataError("empty validation partition")
    theta, rows = _stage(
        "calibrate", calibrate_threshold, predictor, val,
        cfg.grid_lo, cfg.grid_hi, cfg.grid_step,
    )
    out = _outdir(cfg)
    _write_tsv(out / "calibration.tsv", ("theta", "coverage", "metric"),
               [(f"{t:.3f}", f"{c:.6f}", f"{m:.6f}") for t, c, m in rows])
    predictor.theta = theta
    _stage("persist", save_bundle, predictor, _bundle_path(cfg))
    print(f"frozen theta = {theta}; report at {out / 'calibration.tsv'}")
    return 0


def _dump_predictions(predictor, test, path: Path):
    k = min(10, predictor.n_items_) if predictor.mode_ == DISCRETE else 0
    with path.open("w") as fh:
        fh.write("seq_id\tphase\tconfidence\tactive\ttop10\n")
        for s in test.sequences:
            if len(s) < 2:
                continue
            pred = predictor.score_sequence(s.head(len(s) - 1))
            dec = pred.decision
            top = ",".join(str(i) for i in pred.topk[:k]) if k else f"{pred.scores:.6g}"
            fh.write(f"{s.owner}\t{dec.phase}\t{dec.confidence:.6f}\t"
                     f"{str(dec.active).lower()}\t{top}\n")


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args)
    bundle = _stage("load_bundle", load_bundle, _bundle_path(cfg))
    train, _, test = _stage("load_data", load_splits, cfg)
    out = _outdir(cfg)
    params = bundle.get_params()
    for drop in ("seed",):
        params.pop(drop, None)

    if args.dump_predictions:
        _dump_predictions(bundle, test, out / "predictions.tsv")

    if args.baseline_only:
        metrics, _ = _stage("evaluate", evaluate,
                            bundle.variant(archetypes_enabled=False), test)
        rows = [(k, f"{v:.6f}") for k, v in metrics.flat().items()]
        _write_tsv(out / "report_baseline.tsv", ("metric", "baseline"), rows)
        print(f"baseline report at {out / 'report_baseline.tsv'}")
        return 0

    report = _stage("evaluate", multi_seed_run, train, test, params,
                    cfg.seeds, cfg.effective_workers)
    for res in report.per_seed:
        rows = _metric_rows(res.baseline, res.hybrid)
        rows.append(("activation_rate", "", f"{res.activation_rate:.6f}", ""))
        _write_tsv(out / f"report_seed{res.seed}.tsv",
                   ("metric", "baseline", "hybrid", "improvement_pct"), rows)
    agg_rows = []
    for key, agg in report.aggregate.items():
        imp_mean, imp_std = report.improvement[key]
        test_res = report.tests[key]
        agg_rows.append((
            key,
            f"{agg['baseline_mean']:.6f}", f"{agg['baseline_std']:.6f}",
            f"{agg['hybrid_mean']:.6f}", f"{agg['hybrid_std']:.6f}",
            f"{imp_mean:+.2f}", f"{imp_std:.2f}",
            f"{test_res.t_stat:.4f}", f"{test_res.p_value:.3e}",
        ))
    _write_tsv(
        out / "aggregate.tsv",
        ("metric", "baseline_mean", "baseline_std", "hybrid_mean", "hybrid_std",
         "improvement_pct", "improvement_std", "t_stat", "p_value"),
        agg_rows,
    )
    summary = {
        "seeds": list(report.seeds),
        "activation_rate": [r.activation_rate for r in report.per_seed],
        "aggregate": report.aggregate,
        "improvement": {k: list(v) for k, v in report.improvement.items()},
        "p_values": {k: t.p_value for k, t in report.tests.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"reports for {len(report.per_seed)} seeds at {out}")
    return 0


def cmd_stress(args) -> int:
    cfg = load_run_config(args)
    if cfg.dataset != "synthetic":
        raise ConfigError("stress testing requires a synthetic dataset config")
    predictor = _stage("load_bundle", load_bundle, _bundle_path(cfg))
    magnitude = args.magnitude
    spec = cfg.synth_spec(sample_seed=cfg.seed + STRESS_SEED_OFFSET)
    shifted, _ = _stage("generate", gen_shifted, spec, magnitude)

    inputs = [s.head(len(s) - 1) for s in shifted.sequences if len(s) >= 2]
    emb = predictor.backbone_.transform(inputs)
    dmins = min_distances(emb, predictor.archetypes_.centroids_)
    ratio = float(dmins.mean() / predictor.distribution_.mean)
    confs = np.array([1.0 - predictor.distribution_.percentile(d) for d in dmins])

    hyb_metrics, activation = _stage("evaluate", evaluate, predictor, shifted)
    base_metrics, _ = evaluate(predictor.variant(archetypes_enabled=False), shifted)
    identical = all(
        hyb_metrics.flat()[k] == base_metrics.flat()[k] for k in base_metrics.flat()
    )
    out = _outdir(cfg)
    key = "hr@10" if shifted.mode == DISCRETE else "mse"
    _write_tsv(
        out / "stress.tsv",
        ("magnitude", "activation_rate", "mean_confidence", "dmin_ratio",
         f"hybrid_{key}", f"backbone_{key}", "fallback_identical"),
        [(
            f"{magnitude:g}", f"{activation:.6f}", f"{float(confs.mean()):.6f}",
            f"{ratio:.4f}", f"{hyb_metrics.flat()[key]:.6f}",
            f"{base_metrics.flat()[key]:.6f}", str(identical).lower(),
        )],
    )
    print(
        f"magnitude {magnitude:g}: activation {activation:.3f}, "
        f"mean confidence {confs.mean():.3f}, d_min ratio {ratio:.2f}, "
        f"fallback identical: {identical}"
    )
    return 0


def cmd_ablate(args) -> int:
    cfg = load_run_config(args)
    train, _, test = _stage("load_data", load_splits, cfg)
    params = cfg.predictor_params()
    rows = _stage("ablate", ablation_suite, train, test, params, cfg.seeds)
    key = "hr@10" if test.mode == DISCRETE else "mse"
    base = rows[0].mean_of(key)
    table = []
    for row in rows:
        mean = row.mean_of(key)
        rel = (mean - base) / base * 100.0 if base != 0 else float("nan")
        table.append((row.name, f"{mean:.6f}", f"{row.std_of(key):.6f}",
                      f"{rel:+.2f}", f"{float(np.mean(row.activation)):.4f}"))
    out = _outdir(cfg)
    _write_tsv(out / "ablation.tsv",
               ("configuration", f"{key}_mean", f"{key}_std",
                "improvement_pct", "activation_rate"), table)
    print(f"ablation table ({len(rows)} arms) at {out / 'ablation.tsv'}")
    return 0


# ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="seqgate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--outdir", help="output directory override")
        p.add_argument("--seeds", help="seed list: '0..29', '5', or '0,2,4'")
        p.add_argument("--theta", type=float, help="gate threshold override")
        p.add_argument("--workers", type=int,
                       help=f"parallel seed workers (or ${WORKERS_ENV})")

    p = sub.add_parser("synth", help="generate a synthetic corpus to files")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and persist a model bundle")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="grid-search theta on validation data")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="multi-seed paired evaluation")
    common(p)
    p.add_argument("--baseline-only", action="store_true",
                   help="report backbone metrics only")
    p.add_argument("--dump-predictions", action="store_true",
                   help="write per-sequence gate decisions and top-10 lists")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stress", help="distribution-shift refusal test")
    common(p)
    p.add_argument("--magnitude", type=float, default=2.0)
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("ablate", help="four-arm ablation table")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
