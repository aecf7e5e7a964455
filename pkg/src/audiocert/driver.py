"""Certification drivers: run whole verification jobs over audio datasets.

The drivers tie the pieces together: draw transform parameters from per-item
substreams, push augmented clips through a scorer, and hand the score matrix
to the certifier. Every random draw is keyed by (job seed, item index, batch,
sample), so reports are bit-identical across repeat runs and worker counts.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import audio_io, transforms
from .certifier import CertBudget, certify_all
from .errors import AssetError, AudioFormatError, ConfigError
from .jobs import VerificationJob, read_manifest
from .reports import ItemResult, Report
from .scorer import classify, parse_scorer_spec
from .types import AudioClip, Direction

SCORE_BATCH = 128
_BOOT_TAG = 0xB007  # keeps the bootstrap stream clear of the (seed, j, i) draws

_LABEL_TO_DIRECTION = {"bonafide": Direction.BONA_FIDE, "spoof": Direction.SPOOF}


def item_seed(job_seed: int, index: int) -> int:
    """Stable per-item seed; SeedSequence hashing is documented as fixed."""
    return int(np.random.SeedSequence([int(job_seed), int(index)]).generate_state(1, np.uint64)[0])


def _substream_key(seed, j, i):
    if isinstance(seed, (tuple, list)):
        return (*seed, int(j), int(i))
    return (int(seed), int(j), int(i))


def augment_predict(scorer, spec, clip, n, k, seed, *, batch_size=SCORE_BATCH):
    """Score n*k independently transformed copies of a clip.

    Returns a (k, n) matrix of bona fide probabilities; entry [j, i] is drawn
    from the substream keyed (seed, j, i), independent of batching and worker
    scheduling.
    """
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got {n}, {k}")
    out = np.empty((k, n), dtype=np.float64)
    pending = []      # transformed clips awaiting a scorer round trip
    slots = []        # matching (j, i) positions

    def flush():
        if not pending:
            return
        for (j, i), result in zip(slots, scorer.score_batch(pending)):
            out[j, i] = result.p_bonafide
        pending.clear()
        slots.clear()

    for j in range(k):
        for i in range(n):
            theta = transforms.sample_params(spec, _substream_key(seed, j, i))
            pending.append(transforms.apply(spec, clip, theta))
            slots.append((j, i))
            if len(pending) >= batch_size:
                flush()
    flush()
    return out


@dataclass(frozen=True)
class SampleCertification:
    initial: Direction
    counted_correct: bool
    certificates: list


def certify_sample(scorer, spec, clip, budget: CertBudget, epsilons, seed, *,
                   label=None) -> SampleCertification:
    """Certify one clip: classify it, then certify stability of that class."""
    initial = classify(scorer.score(clip))
    oriented = budget.oriented(initial)
    scores = augment_predict(scorer, spec, clip, budget.n, budget.k, seed)
    certs = certify_all(scores, oriented, epsilons,
                        bootstrap_seed=_substream_key(seed, _BOOT_TAG, 0))
    counted = True if label is None else (_LABEL_TO_DIRECTION[label] is initial)
    return SampleCertification(initial=initial, counted_correct=counted, certificates=certs)


def _load_clip(path, sample_rate) -> AudioClip:
    clip = audio_io.load_wav(path)
    if clip.rate != sample_rate:
        clip = audio_io.resample(clip, sample_rate)
    return clip


class _ScorerPool:
    """One scorer per worker thread (bridge handles are single-lane).

    The first thread uses the prototype; later threads get clones. Clones are
    always closed on exit, the prototype only if the pool created it.
    """

    def __init__(self, spec_string, prototype=None):
        self._spec = spec_string
        self._prototype = prototype
        self._owns_prototype = prototype is None
        self._proto_taken = False
        self._local = threading.local()
        self._clones = []
        self._lock = threading.Lock()

    def get(self):
        scorer = getattr(self._local, "scorer", None)
        if scorer is None:
            with self._lock:
                if self._prototype is None:
                    self._prototype = parse_scorer_spec(self._spec)
                if self._proto_taken:
                    scorer = self._prototype.clone()
                    self._clones.append(scorer)
                else:
                    self._proto_taken = True
                    scorer = self._prototype
            self._local.scorer = scorer
        return scorer

    def close(self):
        for scorer in self._clones:
            scorer.close()
        self._clones.clear()
        if self._owns_prototype and self._prototype is not None:
            self._prototype.close()
            self._prototype = None


def _run_items(tasks, workers):
    """Evaluate item tasks, serially or on a thread pool; order preserved."""
    if workers <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda task: task(), tasks))


def run_transform_job(job: VerificationJob, scorer=None, *, workers=1) -> Report:
    """Per-item certification under a parametric transform distribution.

    Item-level data failures (unreadable clips, bad assets) are recorded on
    the item and count as uncertified; scorer protocol failures abort the run.
    """
    if job.mode != "transform":
        raise ConfigError(f"run_transform_job needs a transform job, got mode={job.mode!r}")
    entries = read_manifest(job.manifest, want_labels=True)
    pool = _ScorerPool(job.scorer_spec, scorer)

    def make_task(index, path, label):
        def task():
            scorer = pool.get()
            try:
                clip = _load_clip(path, job.sample_rate)
                res = certify_sample(scorer, job.transform, clip, job.budget,
                                     job.epsilon_grid, item_seed(job.seed, index),
                                     label=label)
            except (AudioFormatError, AssetError, FileNotFoundError, ValueError) as exc:
                return ItemResult(index=index, path=os.path.basename(path), label=label,
                                  initial=None, counted_correct=False, error=str(exc))
            return ItemResult.from_certificates(
                index, os.path.basename(path), label, res.initial,
                res.counted_correct, res.certificates)
        return task

    try:
        items = _run_items([make_task(i, p, lab) for i, (p, lab) in enumerate(entries)], workers)
    finally:
        pool.close()
    return Report(mode="transform", scorer_name=job.scorer_spec, seed=job.seed,
                  epsilon_grid=list(job.epsilon_grid), budget=_budget_dict(job.budget),
                  items=items, config_echo=job.config_echo)


def _group_corpus(entries):
    groups: dict[str, list] = {}
    for path, group in entries:
        groups.setdefault(group, []).append(path)
    return groups


def _corpus_draw(paths, m, seed):
    if len(paths) < m:
        raise ConfigError(
            f"group needs at least n*k={m} clips to sample without replacement, has {len(paths)}")
    order = np.random.default_rng(seed).permutation(len(paths))[:m]
    return [paths[int(i)] for i in order]


def run_corpus_job(job: VerificationJob, scorer=None, *, workers=1) -> Report:
    """Distribution certification per generator group: scores come from
    fresh clips drawn without replacement, not from transform draws.

    The per-reference voice conversion mode ("vc") is the same machinery with
    groups read as reference speakers.
    """
    if job.mode not in ("corpus", "vc"):
        raise ConfigError(f"run_corpus_job needs a corpus or vc job, got mode={job.mode!r}")
    entries = read_manifest(job.manifest, want_labels=False)
    groups = _group_corpus(entries)
    if job.mode == "vc" and list(groups) == ["all"]:
        raise ConfigError("vc mode needs a group column naming the reference speaker")
    budget = job.budget.oriented(Direction.SPOOF)
    pool = _ScorerPool(job.scorer_spec, scorer)

    def make_task(index, name, paths):
        def task():
            scorer = pool.get()
            chosen = _corpus_draw(paths, budget.m, _substream_key(job.seed, index, 0))
            try:
                scores = np.empty(budget.m, dtype=np.float64)
                for lo in range(0, budget.m, SCORE_BATCH):
                    batch = [_load_clip(p, job.sample_rate) for p in chosen[lo:lo + SCORE_BATCH]]
                    for off, result in enumerate(scorer.score_batch(batch)):
                        scores[lo + off] = result.p_bonafide
            except (AudioFormatError, AssetError, FileNotFoundError, ValueError) as exc:
                return ItemResult(index=index, path=name, label=None,
                                  initial=None, counted_correct=False, error=str(exc))
            certs = certify_all(scores.reshape(budget.k, budget.n), budget,
                                job.epsilon_grid,
                                bootstrap_seed=_substream_key(job.seed, _BOOT_TAG, index))
            return ItemResult.from_certificates(index, name, None, Direction.SPOOF, True, certs)
        return task

    tasks = [make_task(i, name, paths) for i, (name, paths) in enumerate(groups.items())]
    try:
        items = _run_items(tasks, workers)
    finally:
        pool.close()
    return Report(mode=job.mode, scorer_name=job.scorer_spec, seed=job.seed,
                  epsilon_grid=list(job.epsilon_grid), budget=_budget_dict(budget),
                  items=items, config_echo=job.config_echo)


def split_scores(pool: np.ndarray, n: int, k: int) -> np.ndarray:
    """Reshape a pooled draw of m = n*k scores into k batches of n, preserving
    draw order: batch j holds pool[j*n : (j+1)*n]."""
    flat = np.asarray(pool, dtype=np.float64).reshape(-1)
    if len(flat) != n * k:
        raise ValueError(f"pooled sample has {len(flat)} scores, split needs n*k={n * k}")
    return flat.reshape(k, n)


def sweep_certificates(pool, budget_template: CertBudget, splits, epsilons, *,
                       bootstrap_seed=0):
    """Certify one pooled score sample under several (n, k) splits.

    Every split sees the same m scores, so differences isolate the effect of
    the batching budget itself.
    """
    out = []
    for n, k in splits:
        budget = CertBudget(n=n, k=k, delta=budget_template.delta,
                            alpha=budget_template.alpha,
                            t_range=budget_template.t_range,
                            direction=budget_template.direction)
        out.append(certify_all(split_scores(pool, n, k), budget, epsilons,
                               bootstrap_seed=bootstrap_seed))
    return out


def run_budget_sweep(job: VerificationJob, scorer=None, *, splits=None, workers=1):
    """Re-certify each item under every (n, k) split of the same pooled draw.

    Transform mode pools m transform draws per clip; corpus mode pools one
    without-replacement draw per group. Returns one Report per split.
    """
    splits = tuple(splits) if splits is not None else job.splits
    if not splits:
        raise ConfigError("sweep needs a [sweep] table with a splits array")
    m = job.budget.m
    for n, k in splits:
        if n * k != m:
            raise ConfigError(f"sweep split n*k must equal budget n*k={m}, got {n}*{k}")
    pool = _ScorerPool(job.scorer_spec, scorer)
    epsilons = job.epsilon_grid

    if job.mode == "transform":
        entries = read_manifest(job.manifest, want_labels=True)

        def make_task(index, path, label):
            def task():
                scorer = pool.get()
                seed = item_seed(job.seed, index)
                try:
                    clip = _load_clip(path, job.sample_rate)
                    initial = classify(scorer.score(clip))
                    pooled = augment_predict(scorer, job.transform, clip, m, 1, seed)
                except (AudioFormatError, AssetError, FileNotFoundError, ValueError) as exc:
                    return (index, os.path.basename(path), label, None, False, str(exc), None)
                per_split = sweep_certificates(
                    pooled, job.budget.oriented(initial), splits, epsilons,
                    bootstrap_seed=_substream_key(seed, _BOOT_TAG, 0))
                counted = _LABEL_TO_DIRECTION[label] is initial
                return (index, os.path.basename(path), label, initial, counted, None, per_split)
            return task

        tasks = [make_task(i, p, lab) for i, (p, lab) in enumerate(entries)]
    else:
        groups = _group_corpus(read_manifest(job.manifest, want_labels=False))
        oriented = job.budget.oriented(Direction.SPOOF)

        def make_task(index, name, paths):
            def task():
                scorer = pool.get()
                chosen = _corpus_draw(paths, m, _substream_key(job.seed, index, 0))
                try:
                    scores = np.empty(m, dtype=np.float64)
                    for lo in range(0, m, SCORE_BATCH):
                        batch = [_load_clip(p, job.sample_rate) for p in chosen[lo:lo + SCORE_BATCH]]
                        for off, result in enumerate(scorer.score_batch(batch)):
                            scores[lo + off] = result.p_bonafide
                except (AudioFormatError, AssetError, FileNotFoundError, ValueError) as exc:
                    return (index, name, None, None, False, str(exc), None)
                per_split = sweep_certificates(
                    scores, oriented, splits, epsilons,
                    bootstrap_seed=_substream_key(job.seed, _BOOT_TAG, index))
                return (index, name, None, Direction.SPOOF, True, None, per_split)
            return task

        tasks = [make_task(i, name, paths) for i, (name, paths) in enumerate(groups.items())]

    try:
        rows = _run_items(tasks, workers)
    finally:
        pool.close()

    reports = []
    for s, (n, k) in enumerate(splits):
        items = []
        for index, path, label, initial, counted, error, per_split in rows:
            if error is not None:
                items.append(ItemResult(index=index, path=path, label=label, initial=None,
                                        counted_correct=False, error=error))
            else:
                items.append(ItemResult.from_certificates(
                    index, path, label, initial, counted, per_split[s]))
        budget = CertBudget(n=n, k=k, delta=job.budget.delta, alpha=job.budget.alpha,
                            t_range=job.budget.t_range, direction=job.budget.direction)
        reports.append(Report(mode=job.mode, scorer_name=job.scorer_spec, seed=job.seed,
                              epsilon_grid=list(epsilons), budget=_budget_dict(budget),
                              items=items, config_echo=job.config_echo,
                              split_label=f"n={n},k={k}"))
    return reports


def export_augmented(spec, clip, count, seed, out_dir, stem="augmented", *,
                     clip_to_unit=False) -> list:
    """Write the first `count` transformed variants of a clip to WAV files,
    using the same substreams the certification run would use. Samples are
    left out of range unless clip_to_unit asks for playback-safe output."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for i in range(count):
        theta = transforms.sample_params(spec, _substream_key(seed, 0, i))
        variant = transforms.apply(spec, clip, theta)
        path = os.path.join(out_dir, f"{stem}_{i:04d}.wav")
        audio_io.save_wav(path, variant, clip_to_unit=clip_to_unit)
        written.append(path)
    return written


def _budget_dict(budget: CertBudget) -> dict:
    return {"n": budget.n, "k": budget.k, "delta": budget.delta, "alpha": budget.alpha,
            "t_range": list(budget.t_range), "direction": budget.direction.value}
