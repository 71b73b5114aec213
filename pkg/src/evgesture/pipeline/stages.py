"""On-disk pipeline stages: every stage reads upstream artifacts, writes its own and a manifest.

Layout under the output directory::

    sim/<split>/seq_00000.evt2, labels.jsonl        sequence splits
    sim/<split>/unit000/trial00.evt2, trials.jsonl  trial splits
    data/<split>.npz                                 encoded windows
    models/float.bin, finetuned.bin, qat.bin, int8.bin
    reports/<model>[-rotated]/...                    evaluation outputs
    manifests/<stage>.json
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..core.events import EventStream
from ..core.gestures import GestureClass
from ..core.surface import MS
from ..evaluation import report as report_io
from ..evaluation.bench import compare_paths
from ..evaluation.metrics import TrialRecord, confusion_matrix
from ..evaluation.sliding import FloatModel, IntegerModel
from ..evaluation.trials import Trial, TrialConfig, evaluate_trials, simulate_unit
from ..model import Dataset, finetune, init_params, load_params, predict, save_params, train
from ..model.network import layer_stage
from ..model.train import FINETUNE_FROZEN
from ..quant import FakeQuantState, calibrate_model, integer_predict, load_quantized, quantize_model, save_quantized
from ..synth.bbox import BBox
from .config import PipelineConfig
from .dataset import EncodedSequence, concat_encoded, encode_sequence, simulate_sequence

log = logging.getLogger("evgesture")

SEQUENCE_SPLITS = ("train", "val", "rtrain", "rval")
TRIAL_SPLITS = ("trials", "rtrials")
ALL_SPLITS = SEQUENCE_SPLITS + TRIAL_SPLITS
ROTATED = {"rtrain", "rval", "rtrials"}
MODELS = ("float", "finetuned", "qat", "int8")


class MissingArtifactError(FileNotFoundError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def git_blob_hash(path) -> str:
    """Content hash as git computes it for a blob."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class Workspace:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.output_dir)

    def sim(self, split: str) -> Path:
        return self.root / "sim" / split

    def data(self, split: str) -> Path:
        return self.root / "data" / f"{split}.npz"

    def model(self, name: str) -> Path:
        return self.root / "models" / f"{name}.bin"

    def reports(self, tag: str) -> Path:
        return self.root / "reports" / tag

    def manifest(self, stage: str) -> Path:
        return self.root / "manifests" / f"{stage}.json"

    def require(self, path: Path, hint: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(f"missing artifact {path} (run `{hint}` first)")
        return path

    def rel(self, path) -> str:
        return Path(path).relative_to(self.root).as_posix()

    def write_manifest(self, stage: str, inputs, outputs, extra: dict | None = None) -> Path:
        def entry(p):
            return {"sha256": sha256_file(p), "git_blob": git_blob_hash(p), "bytes": Path(p).stat().st_size}

        body = {
            "stage": stage,
            "version": __version__,
            "seed": self.cfg.seed,
            "config_hash": self.cfg.config_hash(),
            "config": {k: v for k, v in self.cfg.to_dict().items() if k not in ("output_dir", "jobs")},
            "inputs": {self.rel(p): entry(p) for p in sorted(set(inputs))},
            "outputs": {self.rel(p): entry(p) for p in sorted(set(outputs))},
        }
        if extra:
            body["extra"] = extra
        path = self.manifest(stage)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        return path


def _parallel(fn, items, n_jobs: int) -> list:
    if n_jobs == 1:
        return [fn(i) for i in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(i) for i in items)


def split_sizes(cfg: PipelineConfig) -> dict[str, int]:
    n_train = cfg.data_config().n_sequences()
    n_val = max(1, round(n_train * cfg.data.val_fraction))
    n_rot = max(1, round(n_train * cfg.data.rotated_fraction))
    return {"train": n_train, "val": n_val, "rtrain": n_rot, "rval": n_val}


def trial_config(cfg: PipelineConfig) -> TrialConfig:
    e = cfg.eval
    return TrialConfig(units=e.units, trials_per_unit=e.trials_per_unit, match_window_ns=int(e.match_window_ms * MS))


# -- simulate -------------------------------------------------------------


def _simulate_one(cfg: PipelineConfig, split: str, index: int, directory: Path) -> str:
    seq, events, angle = simulate_sequence(cfg.data_config(), cfg.seed, split, index, rotate=split in ROTATED)
    events.save(directory / f"seq_{index:05d}.evt2")
    record = {
        "index": index,
        "stream": f"seq_{index:05d}.evt2",
        "angle_deg": float(angle),
        "frame_times_ns": [int(t) for t in seq.frame_times],
        "labels": [int(g) for g in seq.labels],
        "bboxes": [None if b is None else b.as_list() for b in seq.bboxes],
    }
    return json.dumps(record, sort_keys=True)


def _simulate_unit(cfg: PipelineConfig, split: str, unit: int, directory: Path) -> list[str]:
    trials = simulate_unit(cfg.data_config(), trial_config(cfg), cfg.seed, unit, rotate=split in ROTATED, split=split)
    lines = []
    for j, tr in enumerate(trials):
        rel = tr.record.stream + ".evt2"
        (directory / rel).parent.mkdir(parents=True, exist_ok=True)
        tr.stream.save(directory / rel)
        rec = tr.record
        lines.append(
            json.dumps(
                {
                    "unit": unit,
                    "trial": j,
                    "prompted_class": int(rec.prompted_class),
                    "prompt_time_ns": int(rec.prompt_time),
                    "response_deadline_ns": int(rec.response_deadline),
                    "stream": rel,
                },
                sort_keys=True,
            )
        )
    return lines


def simulate(cfg: PipelineConfig, splits=ALL_SPLITS) -> list[Path]:
    ws = Workspace(cfg)
    sizes = split_sizes(cfg)
    manifests = []
    for split in splits:
        d = ws.sim(split)
        d.mkdir(parents=True, exist_ok=True)
        if split in SEQUENCE_SPLITS:
            log.info("simulate %s: %d sequences", split, sizes[split])
            lines = _parallel(lambda i: _simulate_one(cfg, split, i, d), range(sizes[split]), cfg.jobs)
            index = d / "labels.jsonl"
        else:
            log.info("simulate %s: %d units", split, cfg.eval.units)
            per_unit = _parallel(lambda u: _simulate_unit(cfg, split, u, d), range(cfg.eval.units), cfg.jobs)
            lines = [line for unit in per_unit for line in unit]
            index = d / "trials.jsonl"
        index.write_text("".join(line + "\n" for line in lines))
        outputs = [index] + [d / json.loads(line)["stream"] for line in lines]
        manifests.append(ws.write_manifest(f"simulate-{split}", [], outputs, {"count": len(lines)}))
    return manifests


# -- encode ---------------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _encode_one(cfg: PipelineConfig, directory: Path, rec: dict) -> EncodedSequence:
    events = EventStream.load(directory / rec["stream"])
    labels = [GestureClass(v) for v in rec["labels"]]
    boxes = [None if b is None else BBox(*b) for b in rec["bboxes"]]
    return encode_sequence(events, np.asarray(rec["frame_times_ns"], np.int64), labels, boxes, cfg.data_config())


def save_dataset(path: Path, data: Dataset, **extra) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez_compressed(f, x=data.x, labels=data.labels, bboxes=data.bboxes, present=data.present, **extra)


def load_dataset(path: Path) -> Dataset:
    with np.load(path) as z:
        return Dataset(z["x"], z["labels"], z["bboxes"], z["present"])


def encode(cfg: PipelineConfig, splits=SEQUENCE_SPLITS) -> list[Path]:
    ws = Workspace(cfg)
    manifests = []
    for split in splits:
        d = ws.sim(split)
        index = ws.require(d / "labels.jsonl", f"simulate --split {split}")
        records = _read_jsonl(index)
        log.info("encode %s: %d sequences", split, len(records))
        parts = _parallel(lambda r: _encode_one(cfg, d, r), records, cfg.jobs)
        data = concat_encoded(parts)
        seq_index = np.concatenate([np.full(len(p.labels), r["index"], np.int32) for p, r in zip(parts, records)])
        window_ends = np.concatenate([p.window_ends for p in parts])
        out = ws.data(split)
        save_dataset(out, data, sequence=seq_index, window_end_ns=window_ends)
        inputs = [index] + [d / r["stream"] for r in records]
        counts = {GestureClass(i + 1).name: int(c) for i, c in enumerate(data.class_counts())}
        manifests.append(ws.write_manifest(f"encode-{split}", inputs, [out], {"windows": len(data), "class_counts": counts}))
    return manifests


# -- training -------------------------------------------------------------


def _history_summary(history: list[dict]) -> list[dict]:
    return [{k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in h.items()} for h in history]


def train_stage(cfg: PipelineConfig) -> Path:
    ws = Workspace(cfg)
    src = ws.require(ws.data("train"), "encode --split train")
    data = load_dataset(src)
    mc = cfg.model_config()
    params = init_params(mc, cfg.seed)
    log.info("train: %d windows, %d parameters", len(data), params.count())
    params, history = train(data, params, mc, cfg.train_config(), log=log.info)
    out = ws.model("float")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_params(out, params, mc, {"kind": "float", "seed": cfg.seed, "history": _history_summary(history)})
    ws.write_manifest("train", [src], [out])
    return out


def finetune_stage(cfg: PipelineConfig) -> Path:
    ws = Workspace(cfg)
    src_model = ws.require(ws.model("float"), "train")
    src_data = ws.require(ws.data("rtrain"), "encode --split rtrain")
    params, mc, _ = load_params(src_model)
    before = params.copy()
    data = load_dataset(src_data)
    log.info("finetune: %d rotated windows", len(data))
    params, history = finetune(params, data, mc, cfg.train_config(), log=log.info)
    frozen_ok = all(
        np.array_equal(before[k], params[k]) for k in params if layer_stage(k) in FINETUNE_FROZEN
    )
    if not frozen_ok:
        raise RuntimeError("frozen stages changed during fine-tuning")
    out = ws.model("finetuned")
    save_params(out, params, mc, {"kind": "finetuned", "seed": cfg.seed, "history": _history_summary(history)})
    ws.write_manifest("finetune", [src_model, src_data], [out], {"frozen_stages": list(FINETUNE_FROZEN)})
    return out


def qat_stage(cfg: PipelineConfig, source: str = "float") -> tuple[Path, Path]:
    """Calibrate observers, run quantisation-aware training, export the integer model."""
    ws = Workspace(cfg)
    src_model = ws.require(ws.model(source), "train" if source == "float" else source)
    src_data = ws.require(ws.data("train"), "encode --split train")
    params, mc, _ = load_params(src_model)
    data = load_dataset(src_data)
    q = cfg.qat
    state = calibrate_model(params, mc, data.x[: q.calibration_samples], state=FakeQuantState(mc, q.momentum))
    tcfg = replace(cfg.train_config(), epochs=q.epochs, lr=cfg.train.lr * q.lr_factor)
    log.info("qat: %d epochs at lr %.2e", q.epochs, tcfg.lr)
    params, history = train(data, params, mc, tcfg, quantizer=state, log=log.info)
    out_q = ws.model("qat")
    save_params(
        out_q,
        params,
        mc,
        {"kind": "qat", "source": source, "seed": cfg.seed, "momentum": q.momentum, "observers": state.to_dict(),
         "history": _history_summary(history)},
    )
    out_i = ws.model("int8")
    save_quantized(out_i, quantize_model(params, mc, state))
    ws.write_manifest("qat", [src_model, src_data], [out_q, out_i], {"source": source})
    return out_q, out_i


# -- evaluation -----------------------------------------------------------


def load_model(ws: Workspace, name: str):
    """A ``predict_proba`` model for one of ``MODELS``."""
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}")
    path = ws.require(ws.model(name), {"float": "train", "finetuned": "finetune"}.get(name, "qat"))
    if name == "int8":
        return IntegerModel(load_quantized(path)), path
    params, mc, meta = load_params(path)
    quantizer = None
    if name == "qat":
        quantizer = FakeQuantState.from_dict(mc, meta["observers"], meta["momentum"])
        quantizer.observe = False
    return FloatModel(params, mc, quantizer), path


def load_trials(directory: Path) -> list[list[Trial]]:
    units: dict[int, list[Trial]] = {}
    for rec in _read_jsonl(directory / "trials.jsonl"):
        tr = TrialRecord(
            GestureClass(rec["prompted_class"]), rec["prompt_time_ns"], rec["response_deadline_ns"], rec["stream"]
        )
        units.setdefault(rec["unit"], []).append(Trial(tr, EventStream.load(directory / rec["stream"])))
    return [units[u] for u in sorted(units)]


def _window_probs(model, x: np.ndarray, batch: int = 256) -> np.ndarray:
    if isinstance(model, IntegerModel):
        return integer_predict(model.qmodel, x, batch)["probs"]
    return predict(model.params, x, model.config, batch, quantizer=model.quantizer)["probs"]


def evaluate_stage(cfg: PipelineConfig, model_name: str | None = None, rotated: bool = False) -> Path:
    ws = Workspace(cfg)
    model_name = model_name or cfg.eval.model
    model, model_path = load_model(ws, model_name)
    val_split, trial_split = ("rval", "rtrials") if rotated else ("val", "trials")
    val_path = ws.require(ws.data(val_split), f"encode --split {val_split}")
    trial_dir = ws.sim(trial_split)
    ws.require(trial_dir / "trials.jsonl", f"simulate --split {trial_split}")

    val = load_dataset(val_path)
    probs = _window_probs(model, val.x)
    cm = confusion_matrix(probs.argmax(axis=1) + 1, val.labels)

    units = load_trials(trial_dir)
    window = cfg.window.build()
    agg, reports, preds = evaluate_trials(
        units, model, trial_config(cfg), window, cfg.eval.softmax_threshold, int(cfg.eval.debounce_ms * MS)
    )
    tag = model_name + ("-rotated" if rotated else "")
    out = ws.reports(tag)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {
        "model": model_name,
        "rotated": rotated,
        "validation": {
            "windows": len(val),
            "average_precision": cm.average_precision,
            "precision": {GestureClass(i + 1).name: p for i, p in enumerate(cm.precision)},
        },
        "trials": agg.to_dict(),
        "softmax_threshold": cfg.eval.softmax_threshold,
        "debounce_ms": cfg.eval.debounce_ms,
    }
    files = [out / "metrics.json", out / "classes.csv", out / "confusion.csv", out / "f1_plot.csv", out / "predictions.jsonl"]
    report_io.write_json(files[0], metrics)
    report_io.write_class_table(files[1], agg)
    report_io.write_confusion(files[2], cm)
    report_io.write_plot_data(files[3], agg)
    with open(files[4], "w") as f:
        for u, unit_preds in enumerate(preds):
            for p in unit_preds:
                f.write(json.dumps({"unit": u, "class": p.gesture.name, "time_ns": int(p.time), "confidence": float(p.confidence)}) + "\n")
    trial_files = [trial_dir / "trials.jsonl"] + [trial_dir / t.record.stream for unit in units for t in unit]
    ws.write_manifest(f"evaluate-{tag}", [model_path, val_path] + trial_files, files)
    return files[0]


def bench_stage(cfg: PipelineConfig, n_inputs: int = 16) -> Path:
    """Single-window latency of the float and integer paths, interleaved."""
    ws = Workspace(cfg)
    float_model, fp = load_model(ws, "float")
    int_model, ip = load_model(ws, "int8")
    val_path = ws.require(ws.data("val"), "encode --split val")
    x = load_dataset(val_path).x[:n_inputs].astype(np.float32)
    inputs = [x[i : i + 1] for i in range(len(x))]
    stats = compare_paths(
        {"float": float_model.predict_proba, "integer": int_model.predict_proba}, inputs, cfg.bench.iterations, cfg.bench.rounds
    )
    out = ws.reports("bench")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "latency.json"
    report_io.write_json(path, {k: v.to_dict() for k, v in stats.items()})
    ws.write_manifest("bench", [fp, ip, val_path], [path])
    return path


def report_stage(cfg: PipelineConfig) -> Path:
    ws = Workspace(cfg)
    root = ws.root / "reports"
    found = sorted(root.glob("*/metrics.json")) if root.exists() else []
    if not found:
        raise MissingArtifactError(f"no evaluation reports under {root} (run `evaluate` first)")
    summary = {}
    for path in found:
        m = json.loads(path.read_text())
        summary[path.parent.name] = {
            "average_precision": m["validation"]["average_precision"],
            "mean_f1": m["trials"]["mean_f1"],
            "median_f1": m["trials"]["median_f1"],
            "group_f1": {g: v["f1"] for g, v in m["trials"]["per_class"].items()},
        }
    inputs = list(found)
    bench = root / "bench" / "latency.json"
    if bench.exists():
        summary["latency_ms"] = {k: v["mean_ms"] for k, v in json.loads(bench.read_text()).items()}
        inputs.append(bench)
    out_json, out_md = root / "summary.json", root / "summary.md"
    report_io.write_json(out_json, summary)
    lines = ["| run | avg precision | mean F1 | median F1 |", "|---|---|---|---|"]
    for tag, s in summary.items():
        if tag != "latency_ms":
            lines.append(f"| {tag} | {s['average_precision']:.3f} | {s['mean_f1']:.3f} | {s['median_f1']:.3f} |")
    if "latency_ms" in summary:
        lines += ["", "| path | mean latency (ms) |", "|---|---|"]
        lines += [f"| {k} | {v:.3f} |" for k, v in summary["latency_ms"].items()]
    out_md.write_text("\n".join(lines) + "\n")
    ws.write_manifest("report", inputs, [out_json, out_md])
    return out_json

