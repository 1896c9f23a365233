"""Episodic training loop with early stopping, plus the frozen-checkpoint
evaluation protocol (episode accuracy means with a normal-approximation CI)."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .audio_io import load_wav
from .diffcore import AdamState, Tape, adam_step, backward, load_archive, save_archive
from .diffcore.ops import reshape, slice_rows
from .encoders import Encoder, EncoderSpec, build_encoder
from .errors import CheckpointMismatchError, ConfigError
from .protonet import Episode, episode_loss, sample_episode


@dataclass(frozen=True)
class TrainConfig:
    """Episode shape and training protocol. Defaults follow the evaluation
    protocol this artifact targets: eval every 500 episodes, stop after 10
    non-improving checks, Adam at 1e-5, 1000 test episodes."""

    n_shot: int = 5
    k_way: int = 5
    q_query: int = 5
    max_episodes: int = 25000
    eval_interval: int = 500
    patience_checks: int = 10
    lr: float = 1e-5
    test_episodes: int = 1000
    val_episodes: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("n_shot", "k_way", "q_query", "max_episodes", "eval_interval",
                     "patience_checks", "test_episodes", "val_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")


@dataclass
class MetricRecord:
    episode: int
    loss: float
    val_accuracy: Optional[float]
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(
            {"episode": self.episode, "loss": self.loss,
             "val_accuracy": self.val_accuracy, "timestamp": self.timestamp},
            sort_keys=True,
        )


def save_history(path, history: Sequence[MetricRecord]) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in history), encoding="utf-8")


def load_history(path) -> list:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            records.append(MetricRecord(d["episode"], d["loss"],
                                        d["val_accuracy"], d["timestamp"]))
    return records


class InputCache:
    """Memoizes encoder.prepare_input per clip path (features stay fixed while
    parameters train)."""

    def __init__(self, encoder: Encoder, loader: Callable = load_wav):
        self.encoder = encoder
        self.loader = loader
        self._cache: dict = {}

    def get(self, path: str):
        hit = self._cache.get(path)
        if hit is None:
            hit = self.encoder.prepare_input(self.loader(path))
            self._cache[path] = hit
        return hit


@dataclass(frozen=True)
class EvalReport:
    mean_accuracy: float
    std_error: float
    ci95_low: float
    ci95_high: float
    n_episodes: int

    def summary(self) -> str:
        return (
            f"accuracy {100 * self.mean_accuracy:.2f}% "
            f"± {100 * 1.96 * self.std_error:.2f} "
            f"(95% CI [{100 * self.ci95_low:.2f}, {100 * self.ci95_high:.2f}], "
            f"{self.n_episodes} episodes)"
        )

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": round(self.mean_accuracy, 6),
            "std_error": round(self.std_error, 6),
            "ci95": [round(self.ci95_low, 6), round(self.ci95_high, 6)],
            "n_episodes": self.n_episodes,
        }


@dataclass
class TrainResult:
    best_params: dict
    best_val_accuracy: Optional[float]
    best_episode: int
    episodes_run: int
    stopped_early: bool
    history: list = field(default_factory=list)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def embed_table(encoder: Encoder, cache: InputCache, paths: Sequence[str],
                batch_size: int = 32) -> dict:
    """Embed each unique path once with frozen parameters; path -> (d,) array."""
    unique = sorted(set(paths))
    table: dict = {}
    for i in range(0, len(unique), batch_size):
        chunk = unique[i:i + batch_size]
        embs = encoder.embed_batch([cache.get(p) for p in chunk]).data
        for p, row in zip(chunk, embs):
            table[p] = np.asarray(row, dtype=np.float64)
    return table


def score_episode(embeddings: Mapping[str, np.ndarray], episode: Episode) -> float:
    """Accuracy of one episode against a fixed embedding table."""
    support = np.stack([
        np.stack([embeddings[p] for p in block]) for block in episode.support
    ])
    queries = np.stack([embeddings[p] for p in episode.query_paths()])
    _, accuracy = episode_loss(support, queries, episode.query_labels())
    return accuracy


def evaluate_embeddings(embeddings: Mapping[str, np.ndarray],
                        split: Mapping[str, Sequence[str]],
                        n_shot: int, k_way: int, q_query: int,
                        n_episodes: int, seed: int) -> EvalReport:
    """Sample n_episodes tasks and report mean accuracy with a 95% CI."""
    rng = random.Random(f"{seed}/eval")
    accs = np.empty(n_episodes)
    for i in range(n_episodes):
        episode = sample_episode(split, n_shot, k_way, q_query, rng)
        accs[i] = score_episode(embeddings, episode)
    mean = float(accs.mean())
    se = float(accs.std(ddof=0) / math.sqrt(n_episodes))
    return EvalReport(mean, se, mean - 1.96 * se, mean + 1.96 * se, n_episodes)


def evaluate(encoder: Encoder, cache: InputCache,
             split: Mapping[str, Sequence[str]], cfg: TrainConfig,
             n_episodes: Optional[int] = None, seed: Optional[int] = None) -> EvalReport:
    """Protocol evaluation: defaults to cfg.test_episodes (1000) episodes."""
    paths = [p for clips in split.values() for p in clips]
    table = embed_table(encoder, cache, paths)
    return evaluate_embeddings(
        table, split, cfg.n_shot, cfg.k_way, cfg.q_query,
        cfg.test_episodes if n_episodes is None else n_episodes,
        cfg.seed if seed is None else seed,
    )


def train(encoder: Encoder, train_split: Mapping[str, Sequence[str]],
          val_split: Mapping[str, Sequence[str]], cfg: TrainConfig,
          loader: Callable = load_wav,
          val_metric: Optional[Callable] = None,
          progress: Optional[Callable] = None) -> TrainResult:
    """Sample episode -> embed -> loss -> backward -> Adam, with periodic
    validation checks and early stopping.

    Every eval_interval episodes, validation accuracy is measured on a fixed
    batch of cfg.val_episodes episodes (pre-sampled once from a dedicated seed
    stream). The first check sets the incumbent; a check counts against
    patience unless strictly greater than the incumbent. Training stops after
    patience_checks consecutive non-improving checks or at max_episodes.
    val_metric, if given, replaces the validation evaluator (used for protocol
    tests); it receives (encoder, episode_index).
    """
    cache = InputCache(encoder, loader)
    state = AdamState.for_params(encoder.params)
    rng_ep = random.Random(f"{cfg.seed}/episodes")
    val_episodes: Optional[list] = None
    history: list = []
    best_acc: Optional[float] = None
    best_params: Optional[dict] = None
    best_episode = 0
    bad_checks = 0
    stopped_early = False
    episodes_run = 0
    kn = cfg.k_way * cfg.n_shot

    def validation_accuracy(ep: int) -> float:
        nonlocal val_episodes
        if val_metric is not None:
            return float(val_metric(encoder, ep))
        if val_episodes is None:
            rng_val = random.Random(f"{cfg.seed}/val")
            val_episodes = [
                sample_episode(val_split, cfg.n_shot, cfg.k_way, cfg.q_query, rng_val)
                for _ in range(cfg.val_episodes)
            ]
        paths = [p for e in val_episodes for p in e.support_paths() + e.query_paths()]
        table = embed_table(encoder, cache, paths)
        return float(np.mean([score_episode(table, e) for e in val_episodes]))

    for ep in range(1, cfg.max_episodes + 1):
        episode = sample_episode(train_split, cfg.n_shot, cfg.k_way, cfg.q_query, rng_ep)
        inputs = [cache.get(p) for p in episode.support_paths() + episode.query_paths()]
        with Tape():
            embs = encoder.embed_batch(inputs)
            support = reshape(slice_rows(embs, 0, kn),
                              (cfg.k_way, cfg.n_shot, encoder.embed_dim))
            queries = slice_rows(embs, kn, embs.shape[0])
            loss, train_acc = episode_loss(support, queries, episode.query_labels())
            grad_map = backward(loss)
        grads = {
            name: grad_map[p].data if p in grad_map else np.zeros_like(p.data)
            for name, p in encoder.params.items()
        }
        adam_step(encoder.params, grads, state, cfg.lr)
        episodes_run = ep

        val_acc: Optional[float] = None
        if ep % cfg.eval_interval == 0:
            val_acc = validation_accuracy(ep)
            if best_acc is None or val_acc > best_acc:
                best_acc = val_acc
                best_params = encoder.state_dict()
                best_episode = ep
                bad_checks = 0
            else:
                bad_checks += 1
        history.append(MetricRecord(ep, float(loss.item()), val_acc, _now()))
        if progress is not None:
            progress(ep, float(loss.item()), train_acc, val_acc)
        if val_acc is not None and bad_checks >= cfg.patience_checks:
            stopped_early = True
            break

    if best_params is None:
        best_params = encoder.state_dict()
        best_episode = episodes_run
    return TrainResult(best_params, best_acc, best_episode, episodes_run,
                       stopped_early, history)


# -- encoder checkpoints -----------------------------------------------------------


def save_encoder_checkpoint(path, encoder: Encoder, params: Optional[dict] = None,
                            extra_meta: Optional[dict] = None) -> None:
    meta = {"spec": encoder.spec.header()}
    if extra_meta:
        meta.update(extra_meta)
    save_archive(path, params if params is not None else encoder.state_dict(), meta)


def load_encoder_checkpoint(path, spec: EncoderSpec):
    """Returns (tensors, meta); rejects archives whose header disagrees with spec."""
    tensors, meta = load_archive(path)
    header = meta.get("spec", {})
    expected = spec.header()
    if header != expected:
        raise CheckpointMismatchError(
            f"checkpoint header {header} does not match requested encoder {expected}"
        )
    return tensors, meta


def restore_encoder(path, spec: EncoderSpec, frontend=None) -> Encoder:
    tensors, _ = load_encoder_checkpoint(path, spec)
    encoder = build_encoder(spec, frontend)
    encoder.load_state(tensors)
    return encoder


# -- report rendering ----------------------------------------------------------------


def render_eval_table(results: Mapping[str, Mapping[tuple, EvalReport]]) -> str:
    """Plain-text accuracy table: one row per encoder, one column per (shot, way)."""
    columns = sorted({key for row in results.values() for key in row})
    headers = ["encoder"] + [f"{n}-shot {k}-way" for n, k in columns]
    rows = []
    for kind in sorted(results):
        cells = [kind]
        for key in columns:
            report = results[kind].get(key)
            cells.append(f"{100 * report.mean_accuracy:.1f}%" if report else "-")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for cells in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines) + "\n"
