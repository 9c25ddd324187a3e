"""Pipeline stages behind the CLI subcommands.

Every stage writes plain-text outputs (JSON records, CSV tables) into the
output directory and records their digests in manifest.json.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from dataclasses import asdict
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import arima, difficulty, gbrt
from .config import PipelineConfig
from .ingest import (TRY_FIELDS, DailyRecord, clean_records, hard_share_statistic,
                     parse_results_file, write_results_file)
from .utils import derive_seed
from .word_attributes import (SERIES_NAMES, WordAttributes, correlation_matrix, high_low_split,
                              load_letter_table, load_word_table, word_attributes)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
TIMINGS = "timings.json"


def _clean_json(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _clean_json(float(obj))
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else repr(float(v))
    return v


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Outputs:
    """Collects files written by one stage so the manifest can list them."""

    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.files: list[str] = []

    def _write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files.append(name)
        return path

    def json(self, name: str, obj) -> Path:
        return self._write(name, json.dumps(_clean_json(obj), indent=2, sort_keys=True) + "\n")

    def table(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return self._write(name, buf.getvalue())

    def text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def register(self, name: str) -> None:
        self.files.append(name)


class Stage:
    """Context for one subcommand run; writes manifest entries on exit."""

    def __init__(self, name: str, config: PipelineConfig):
        self.name = name
        self.config = config
        self.out = Outputs(Path(config.paths.out))
        self.seed = derive_seed(config.seed, name)
        self._t0 = 0.0

    def __enter__(self):
        self.out.dir.mkdir(parents=True, exist_ok=True)
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            return False
        manifest_path = self.out.dir / MANIFEST
        manifest = {}
        if manifest_path.is_file():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        inputs = {}
        for key in ("results", "letters", "words"):
            p = getattr(self.config.paths, key)
            if p and Path(p).is_file():
                inputs[key] = {"path": p, "sha256": sha256_file(Path(p))}
        manifest["config"] = self.config.snapshot()
        manifest["seed"] = self.config.seed
        manifest["inputs"] = inputs
        manifest.setdefault("stages", {})[self.name] = {
            "seed": self.seed,
            "outputs": {f: sha256_file(self.out.dir / f) for f in sorted(set(self.out.files))},
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        timings_path = self.out.dir / TIMINGS
        timings = json.loads(timings_path.read_text()) if timings_path.is_file() else {}
        timings[self.name] = round(time.perf_counter() - self._t0, 6)
        timings_path.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
        return False


# ---------------------------------------------------------------- data loading

def load_clean(config: PipelineConfig):
    raw = parse_results_file(config.paths.results)
    c = config.cleaning
    return clean_records(raw, neighbor_window=c.neighbor_window,
                         sum_drop_tolerance=c.sum_drop_tolerance, outlier_ratio=c.outlier_ratio)


def load_tables(config: PipelineConfig):
    return (load_letter_table(config.paths.letters, normalize=True),
            load_word_table(config.paths.words))


def attributes_for(records: list[DailyRecord], config: PipelineConfig) -> list[WordAttributes]:
    letters, words = load_tables(config)
    return [word_attributes(r.word, letters, words) for r in records]


# ---------------------------------------------------------------- stages

def cmd_preprocess(config: PipelineConfig) -> dict:
    with Stage("preprocess", config) as st:
        records, report = load_clean(config)
        write_results_file(records, st.out.dir / "cleaned.csv")
        st.out.register("cleaned.csv")
        report.write(st.out.dir / "cleaning_report.jsonl")
        st.out.register("cleaning_report.jsonl")
        summary = report.entries()[-1]
    return summary


def cmd_attributes(config: PipelineConfig) -> list[dict]:
    with Stage("attributes", config) as st:
        records, _ = load_clean(config)
        attrs = attributes_for(records, config)
        rows = [(r.word, a.freq, a.wie, a.nre, int(a.freq_found)) for r, a in zip(records, attrs)]
        st.out.table("attributes.csv", ("word", "freq", "wie", "nre", "freq_found"), rows)
    return [{"word": r.word, "freq": a.freq, "wie": a.wie, "nre": a.nre,
             "freq_found": a.freq_found} for r, a in zip(records, attrs)]


def _hindcast_mask(dates: list[date], months: int) -> np.ndarray:
    last = dates[-1]
    y, m = last.year, last.month - (months - 1)
    while m < 1:
        y, m = y - 1, m + 12
    first = date(y, m, 1)
    return np.array([d >= first for d in dates])


def _choose_d(series: np.ndarray) -> tuple[int, list[dict]]:
    tests = []
    for d in range(3):
        res = arima.adf_test(arima.difference(series, d))
        tests.append({"d": d, "statistic": res.statistic, "p_value": res.p_value,
                      "lags_used": res.lags_used})
        if res.p_value < 0.05:
            return d, tests
    return 2, tests


def fit_forecast_model(config: PipelineConfig, records: list[DailyRecord], seed: int):
    """ADF -> order selection -> CSS fit. Returns (model, diagnostics dict, selection)."""
    series = np.array([r.reported_results for r in records], dtype=float)
    cfg = config.arima
    if np.ptp(series) == 0:
        model = arima.fit_arima(series, 0, 0, 0, seed=seed)
        return model, {"degenerate": True, "adf": []}, None
    if cfg.d is None:
        d, adf = _choose_d(series)
    else:
        d = cfg.d
        adf = [{"d": d, **asdict(arima.adf_test(arima.difference(series, d)))}]
    sel = arima.select_orders(series, d, cfg.max_order, criterion=cfg.criterion,
                              diag_lags=cfg.diag_lags, seed=seed)
    model = arima.fit_arima(series, sel.p, d, sel.q, seed=seed)
    return model, {"degenerate": False, "adf": adf}, sel


def _horizon(records: list[DailyRecord], target: str) -> int:
    h = (date.fromisoformat(target) - records[-1].date).days
    if h < 1:
        raise ValueError(f"target date {target} is not after the last observation")
    return h


def cmd_forecast(config: PipelineConfig, sweep: list[float] | None = None) -> dict:
    with Stage("forecast", config) as st:
        records, _ = load_clean(config)
        dates = [r.date for r in records]
        model, diag, sel = fit_forecast_model(config, records, st.seed)
        horizon = _horizon(records, config.arima.target_date)
        path = arima.forecast(model, horizon)
        point = float(path[-1])

        idx, fitted = model.fitted_levels()
        mask = _hindcast_mask(dates, config.arima.hindcast_months)[idx]
        truth = model.series[idx][mask]
        interval = arima.prediction_interval(point, truth, fitted[mask])

        resid = model.residuals[model.start:]
        white_p = None
        if not diag["degenerate"]:
            lags = min(config.arima.white_noise_lags, len(resid) - 1)
            white_p = arima.ljung_box(resid, lags, n_params=model.p + model.q)

        result = {
            "orders": [model.p, model.d, model.q],
            "constant": model.constant, "ar": list(model.ar_coeffs), "ma": list(model.ma_coeffs),
            "residual_variance": model.residual_variance,
            "adf": diag["adf"], "ljung_box_p": white_p,
            "target_date": config.arima.target_date, "horizon": horizon,
            "point": point, "len": interval.len, "lower": interval.lower, "upper": interval.upper,
            "hindcast_days": int(mask.sum()),
        }
        if sel is not None:
            result["criterion"] = sel.criterion
            st.out.table("order_scores.csv", ("p", "q", sel.criterion),
                         [(p, q, v) for (p, q), v in sorted(sel.scores.items())])
            for name, vals in (("acf", sel.acf), ("pacf", sel.pacf)):
                st.out.table(f"{name}.csv", ("lag", "value", "lower", "upper"),
                             [(k, v, -sel.band, sel.band) for k, v in enumerate(vals)])
        resid_dates = [dates[i] for i in idx]
        st.out.table("residuals.csv", ("date", "actual", "fitted", "residual"),
                     [(d.isoformat(), a, f, a - f)
                      for d, a, f in zip(resid_dates, model.series[idx], fitted)])
        st.out.table("forecast_path.csv", ("date", "forecast"),
                     [((dates[-1] + timedelta(days=h + 1)).isoformat(), v)
                      for h, v in enumerate(path)])
        values = config.arima.sweep if sweep is None else sweep
        if values and (model.p or model.q):
            table = arima.sensitivity_sweep(model, values, horizon)
            result["sweep"] = [{"coefficient": c, "forecast": f} for c, f in table]
            st.out.table("sweep.csv", ("coefficient", "forecast"), table)
        st.out.json("forecast.json", result)
    return result


def cmd_sensitivity(config: PipelineConfig, values: list[float] | None = None) -> list:
    with Stage("sensitivity", config) as st:
        records, _ = load_clean(config)
        model, _, _ = fit_forecast_model(config, records, derive_seed(config.seed, "forecast"))
        horizon = _horizon(records, config.arima.target_date)
        values = config.arima.sweep if values is None else values
        table = arima.sensitivity_sweep(model, values, horizon)
        st.out.table("sensitivity.csv", ("coefficient", "forecast"), table)
    return table


def _predictor(config: PipelineConfig, st: Stage, records, attrs, retrain: bool):
    path = st.out.dir / "gbrt_model.json"
    if path.is_file() and not retrain:
        log.info("reusing %s", path)
        st.out.register("gbrt_model.json")
        return gbrt.load_predictor(path)
    g = config.gbrt
    pred = gbrt.train_distribution_predictor(attrs, [r.tries for r in records],
                                             test_fraction=g.test_fraction,
                                             tolerance=g.tolerance, seed=st.seed,
                                             params=g.params)
    st.out.text("gbrt_model.json", gbrt.dumps_predictor(pred))
    return pred


def cmd_predict(config: PipelineConfig, word: str, retrain: bool = False) -> dict:
    word = word.strip().lower()
    with Stage("predict", config) as st:
        records, _ = load_clean(config)
        letters, words = load_tables(config)
        target = word_attributes(word, letters, words)
        attrs = [word_attributes(r.word, letters, words) for r in records]
        pred = _predictor(config, st, records, attrs, retrain)
        dist = gbrt.predict_distribution(pred, target)
        st.out.table("accuracy.csv", ("bucket", "accuracy", "test_size"),
                     zip(gbrt.BUCKETS, pred.accuracies, pred.test_sizes))
        result = {"word": word,
                  "attributes": {"freq": target.freq, "wie": target.wie, "nre": target.nre,
                                 "freq_found": target.freq_found},
                  "distribution": dict(zip(TRY_FIELDS, dist.as_tuple())),
                  "raw": pred.raw(target),
                  "accuracies": dict(zip((f"p{b}" if b < 7 else "px" for b in gbrt.BUCKETS),
                                         pred.accuracies)),
                  "mean_accuracy": pred.mean_accuracy, "tolerance": pred.tolerance}
        st.out.json(f"predict_{word}.json", result)
    return result


def cmd_classify(config: PipelineConfig, word: str, retrain: bool = False) -> dict:
    word = word.strip().lower()
    cc = config.clustering
    with Stage("classify", config) as st:
        records, _ = load_clean(config)
        letters, words = load_tables(config)
        target = word_attributes(word, letters, words)
        attrs = [word_attributes(r.word, letters, words) for r in records]
        rows = np.array([r.tries.as_tuple() for r in records])

        k_max = min(cc.k_max, len(rows))
        curve = difficulty.elbow_curve(rows, k_max, seed=st.seed, restarts=cc.restarts,
                                       max_iter=cc.max_iter)
        elbow_k = difficulty.choose_elbow(curve)
        st.out.table("elbow.csv", ("k", "sse"), curve)

        km = difficulty.kmeans(rows, cc.k, max_iter=cc.max_iter, seed=st.seed,
                               restarts=cc.restarts)
        table = difficulty.anova(rows, km.assignments)
        names = difficulty.label_clusters(km) if cc.k == 3 else {}
        header = ["bucket"]
        for j in range(km.k):
            n = int(np.sum(km.assignments == j))
            header.append(f"cluster{j}_{names[j] if names else j}_n{n}")
        st.out.table("clusters.csv", [*header, "F", "p"],
                     [(row.feature,
                       *(f"{m:.3f}+{s:.3f}" for m, s in zip(row.means, row.stds)),
                       row.F, row.p_value) for row in table])
        labels = [names[int(a)] for a in km.assignments]

        tree_path = st.out.dir / "tree_model.json"
        tree, train_m, test_m = difficulty.train_tree_classifier(
            attrs, labels, test_fraction=config.classifier.test_fraction, seed=st.seed,
            max_depth=config.classifier.max_depth,
            min_samples_leaf=config.classifier.min_samples_leaf)
        if tree_path.is_file() and not retrain:
            tree = difficulty.load_tree(tree_path)
            st.out.register("tree_model.json")
        else:
            st.out.text("tree_model.json", difficulty.dumps_tree(tree))
        st.out.table("metrics.csv", ("set", "accuracy", "recall", "precision", "f1"),
                     [("train", *asdict(train_m).values()), ("test", *asdict(test_m).values())])
        ranking = sorted(zip(difficulty.FEATURES, tree.feature_importances),
                         key=lambda t: -t[1])
        st.out.table("importances.csv", ("feature", "importance"), ranking)
        label = difficulty.classify_word(tree, target)
        result = {"word": word, "label": str(label), "elbow_k": elbow_k, "k": km.k,
                  "cluster_labels": {str(j): str(v) for j, v in names.items()},
                  "cluster_sizes": np.bincount(km.assignments, minlength=km.k).tolist(),
                  "train": asdict(train_m), "test": asdict(test_m),
                  "importance_order": [f for f, _ in ranking]}
        st.out.json(f"classify_{word}.json", result)
    return result


def cmd_report(config: PipelineConfig) -> dict:
    with Stage("report", config) as st:
        records, _ = load_clean(config)
        shares, frac = hard_share_statistic(records, config.hard_share_threshold)
        st.out.table("hard_share.csv", ("date", "word", "share"),
                     [(r.date.isoformat(), r.word, shares[r.word]) for r in records])
        result = {"threshold": config.hard_share_threshold, "fraction": frac,
                  "n_words": len(shares)}
        if config.paths.letters and config.paths.words:
            attrs = attributes_for(records, config)
            tries = [r.tries for r in records]
            corr = correlation_matrix(attrs, tries)
            st.out.table("correlation.csv", ("series", *SERIES_NAMES),
                         [(name, *row) for name, row in zip(SERIES_NAMES, corr)])
            splits = {}
            for name, values in (("FREQ", [a.freq for a in attrs]), ("WIE", [a.wie for a in attrs]),
                                 ("NRE", [a.nre for a in attrs])):
                try:
                    high, low = high_low_split(values, tries)
                except ValueError as exc:
                    splits[name] = {"error": str(exc)}
                    continue
                st.out.table(f"split_{name.lower()}.csv", ("bucket", "high", "low"),
                             zip(TRY_FIELDS, high.as_tuple(), low.as_tuple()))
                splits[name] = {"high_expected_tries": high.expected_tries(),
                                "low_expected_tries": low.expected_tries()}
            result["splits"] = splits
        st.out.json("report.json", result)
    return result
