"""Posterior beliefs over transition functions and their uncertainty summaries.

Two interchangeable backends share one interface:

* :class:`DirichletBelief` keeps conjugate pseudo-counts per state-action pair
  and updates online.
* :class:`EnsembleBelief` keeps a bootstrap ensemble of count models that is
  refit from the replay buffers when :meth:`TransitionBelief.tune_model` fires.

Per-successor quantities are stored on the compact ``(S, A, K)`` slots of a
:class:`~adamcts.mdp.SuccessorTable`.
"""
from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .mdp import MdpSnapshot, SuccessorTable, TransitionRecord

DEFAULT_SAMPLES = 10
DEFAULT_TRANSFER = 0.5


@dataclass(frozen=True)
class TuneConfig:
    interval: int = 5
    threshold: int = 50
    updates: int = 2

    def __post_init__(self):
        if min(self.interval, self.threshold, self.updates) < 1:
            raise ValueError("tuning parameters must be positive integers")

    def gate(self, episode_index: int, instance_size: int) -> bool:
        return episode_index % self.interval == 0 and instance_size >= self.threshold


class PredictiveSample(NamedTuple):
    states: tuple[int, ...]
    mu: np.ndarray
    sigma2: float


class UncertaintySummary(NamedTuple):
    epistemic: float
    aleatoric: float


def draw_latent(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    return rng.standard_normal(dim)


class ReplayBuffers:
    """Global buffer D across all instances and instance buffer D_b for the current MDP."""

    def __init__(self, capacity: int = 100_000, instance_capacity: int = 100_000):
        self.global_ = deque(maxlen=capacity)
        self.instance = deque(maxlen=instance_capacity)
        self._pair_counts: Counter = Counter()

    def add(self, rec: TransitionRecord) -> None:
        self.global_.append(rec)
        if len(self.instance) == self.instance.maxlen:
            old = self.instance[0]
            self._pair_counts[(old.s, old.a)] -= 1
            if not self._pair_counts[(old.s, old.a)]:
                del self._pair_counts[(old.s, old.a)]
        self.instance.append(rec)
        self._pair_counts[(rec.s, rec.a)] += 1

    def new_instance(self) -> ReplayBuffers:
        """Keep D, start an empty D_b."""
        out = ReplayBuffers(self.global_.maxlen, self.instance.maxlen)
        out.global_.extend(self.global_)
        return out

    def instance_pairs(self) -> set[tuple[int, int]]:
        return set(self._pair_counts)


def gini(mu: np.ndarray) -> np.ndarray:
    """Categorical spread sum_j mu_j (1 - mu_j) along the last axis."""
    return np.sum(mu * (1.0 - mu), axis=-1)


def prior_variance(k) -> np.ndarray:
    """Per-dimension variance of a flat Dirichlet over ``k`` outcomes."""
    k = np.asarray(k, dtype=float)
    return np.where(k > 1, (k - 1.0) / (k * k * (k + 1.0)), 0.0)


def slot_variance(mu: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Unbiased variance across samples (axis 0), averaged over valid slots."""
    if mu.shape[0] < 2:
        raise ValueError("epistemic variance needs at least two samples")
    # shift by the first draw: same variance, and identical draws give exactly zero
    var = (mu - mu[:1]).var(axis=0, ddof=1)
    n_valid = valid.sum(axis=-1)
    return np.where(valid, var, 0.0).sum(axis=-1) / np.maximum(n_valid, 1)


class TransitionBelief:
    """Shared machinery: buffers, latent tag, instance visit counts, sampling summaries."""

    backend = ""

    def __init__(self, table: SuccessorTable, n_samples: int = DEFAULT_SAMPLES, tag=None,
                 buffers: ReplayBuffers | None = None):
        self.table = table
        self.n_samples = int(n_samples)
        self.tag = np.zeros(2) if tag is None else np.asarray(tag, dtype=float)
        self.buffers = buffers if buffers is not None else ReplayBuffers()
        self.instance_counts = np.zeros(table.succ.shape[:2], dtype=np.int64)
        self.update_count = 0
        self.version = 0

    # -- backend hooks -------------------------------------------------
    def mean_probs(self) -> np.ndarray:
        raise NotImplementedError

    def predictive_samples(self, rng: np.random.Generator, n: int | None = None):
        """``(mu, sigma2)`` for every pair: shapes ``(n, S, A, K)`` and ``(n, S, A)``."""
        raise NotImplementedError

    def _pair_samples(self, s: int, a: int, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def _record_stats(self, s: int, a: int, k: int) -> None:
        pass

    def _tune_pass(self, rng: np.random.Generator) -> None:
        pass

    def visited_pairs(self) -> set[tuple[int, int]]:
        raise NotImplementedError

    def has_evidence(self) -> np.ndarray:
        """(S, A) mask of pairs the belief holds any data for, transferred or new."""
        raise NotImplementedError

    # -- common API ----------------------------------------------------
    @property
    def support(self) -> np.ndarray:
        return self.table.valid

    def slot(self, s: int, a: int, s_next: int) -> int:
        hits = np.flatnonzero(self.table.succ[s, a] == s_next)
        if hits.size == 0:
            raise ValueError(f"successor {s_next} is outside the support of ({s}, {a})")
        return int(hits[0])

    def observe(self, rec: TransitionRecord) -> TransitionBelief:
        k = self.slot(rec.s, rec.a, rec.s_next)
        if rec.w_b is None:
            rec = rec._replace(w_b=tuple(float(x) for x in self.tag))
        self.buffers.add(rec)
        self.instance_counts[rec.s, rec.a] += 1
        self._record_stats(rec.s, rec.a, k)
        self.version += 1
        return self

    def observe_all(self, records: Iterable[TransitionRecord]) -> TransitionBelief:
        for rec in records:
            self.observe(rec)
        return self

    def sample_predictions(self, s: int, a: int, rng: np.random.Generator) -> list[PredictiveSample]:
        valid = self.table.valid[s, a]
        states = tuple(int(x) for x in self.table.succ[s, a][valid])
        mu = self._pair_samples(s, a, rng, self.n_samples)
        return [PredictiveSample(states, m[valid], float(gini(m))) for m in mu]

    def epistemic_variance(self, s: int, a: int, rng: np.random.Generator, n_samples: int | None = None) -> float:
        n = self.n_samples if n_samples is None else n_samples
        mu = self._pair_samples(s, a, rng, n)
        return float(slot_variance(mu, self.table.valid[s, a]))

    def aleatoric_average(self, subset: Iterable[tuple[int, int]], rng: np.random.Generator,
                          n_samples: int | None = None) -> float:
        pairs = list(subset)
        if not pairs:
            raise ValueError("aleatoric average needs a non-empty subset")
        n = self.n_samples if n_samples is None else n_samples
        return float(np.mean([gini(self._pair_samples(s, a, rng, n)).mean() for s, a in pairs]))

    def uncertainty(self, s: int, a: int, subset, rng: np.random.Generator) -> UncertaintySummary:
        return UncertaintySummary(self.epistemic_variance(s, a, rng), self.aleatoric_average(subset, rng))

    def evidence_pairs(self) -> set[tuple[int, int]]:
        """The state-action subset used for aleatoric comparisons."""
        pairs = self.buffers.instance_pairs()
        return pairs if pairs else self.visited_pairs()

    def tune_model(self, cfg: TuneConfig, episode_index: int, rng: np.random.Generator) -> TransitionBelief:
        if not cfg.gate(episode_index, len(self.buffers.instance)):
            return self
        for _ in range(cfg.updates):
            self._tune_pass(rng)
            self.update_count += 1
        self.version += 1
        return self

    def sample_successor(self, s: int, a: int, rng: np.random.Generator) -> int:
        """Draw a successor from the posterior mean distribution."""
        probs = self.mean_probs()[s, a]
        k = rng.choice(len(probs), p=probs / probs.sum())
        return int(self.table.succ[s, a, k])

    def to_dict(self) -> dict:
        t = self.table
        return {
            "backend": self.backend,
            "n_samples": self.n_samples,
            "tag": self.tag.tolist(),
            "instance_counts": self.instance_counts.tolist(),
            "update_count": self.update_count,
            "table": {
                "succ": t.succ.tolist(),
                "rewards": t.rewards.tolist(),
                "terminal": t.terminal.tolist(),
                "gamma": t.gamma,
            },
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


class DirichletBelief(TransitionBelief):
    """Independent Dirichlet posterior per state-action pair over its successor slots."""

    backend = "dirichlet"

    def __init__(self, table: SuccessorTable, alpha: np.ndarray | None = None, **kwargs):
        super().__init__(table, **kwargs)
        if alpha is None:
            alpha = table.valid.astype(float)
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != table.succ.shape:
            raise ValueError("pseudo-counts must align with the successor table")
        if np.any(alpha[table.valid] <= 0):
            raise ValueError("pseudo-counts must be positive on the support")
        self.alpha = np.where(table.valid, alpha, 0.0)

    @classmethod
    def from_mdp(cls, mdp: MdpSnapshot, support: np.ndarray | None = None, **kwargs) -> DirichletBelief:
        return cls(SuccessorTable.from_mdp(mdp, support), **kwargs)

    def mean_probs(self) -> np.ndarray:
        return self.alpha / self.alpha.sum(axis=-1, keepdims=True)

    def _dirichlet(self, alpha: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_gamma(np.broadcast_to(alpha, (n,) + alpha.shape))
        return g / g.sum(axis=-1, keepdims=True)

    def predictive_samples(self, rng, n=None):
        mu = self._dirichlet(self.alpha, rng, self.n_samples if n is None else n)
        return mu, gini(mu)

    def _pair_samples(self, s, a, rng, n):
        return self._dirichlet(self.alpha[s, a], rng, n)

    def _record_stats(self, s, a, k):
        self.alpha[s, a, k] += 1.0

    def visited_pairs(self):
        excess = self.alpha.sum(axis=-1) > self.table.valid.sum(axis=-1) + 1e-12
        excess &= ~self.table.terminal[:, None]
        return {(int(s), int(a)) for s, a in zip(*np.nonzero(excess))}

    def has_evidence(self):
        return (self.alpha.sum(axis=-1) > self.table.valid.sum(axis=-1) + 1e-12) | (self.instance_counts > 0)

    def transferred(self, transfer: float, tag: np.ndarray) -> DirichletBelief:
        alpha = np.where(self.table.valid, 1.0 + transfer * (self.alpha - 1.0), 0.0)
        return DirichletBelief(self.table, alpha, n_samples=self.n_samples, tag=tag,
                               buffers=self.buffers.new_instance())

    def to_dict(self):
        doc = super().to_dict()
        doc["alpha"] = self.alpha.tolist()
        return doc


class EnsembleBelief(TransitionBelief):
    """Bootstrap ensemble of smoothed count models.

    Each member is refit on a weighted resample of the global buffer, where a
    record's weight is the Gaussian similarity between its latent tag and the
    current one. Records from the current instance therefore weigh 1.
    """

    backend = "ensemble"

    def __init__(self, table: SuccessorTable, members: np.ndarray | None = None, smoothing: float = 1.0,
                 tag_lr: float = 0.5, **kwargs):
        super().__init__(table, **kwargs)
        shape = (self.n_samples,) + table.succ.shape
        self.members = np.zeros(shape) if members is None else np.asarray(members, dtype=float).copy()
        if self.members.shape != shape:
            raise ValueError(f"ensemble counts must have shape {shape}")
        self.smoothing = smoothing
        self.tag_lr = tag_lr

    @classmethod
    def from_mdp(cls, mdp: MdpSnapshot, support: np.ndarray | None = None, **kwargs) -> EnsembleBelief:
        return cls(SuccessorTable.from_mdp(mdp, support), **kwargs)

    def _member_probs(self) -> np.ndarray:
        c = np.where(self.table.valid, self.members + self.smoothing, 0.0)
        return c / c.sum(axis=-1, keepdims=True)

    def mean_probs(self):
        return self._member_probs().mean(axis=0)

    def predictive_samples(self, rng=None, n=None):
        mu = self._member_probs()
        return mu, gini(mu)

    def _pair_samples(self, s, a, rng, n):
        return self._member_probs()[:, s, a]

    def visited_pairs(self):
        return {(rec.s, rec.a) for rec in self.buffers.global_ if not self.table.terminal[rec.s]}

    def has_evidence(self):
        return (self.members.sum(axis=(0, -1)) > 0) | (self.instance_counts > 0)

    def _weights(self, records: list[TransitionRecord]) -> np.ndarray:
        tags = np.array([rec.w_b for rec in records], dtype=float)
        d2 = np.sum((tags - self.tag[None, :]) ** 2, axis=1)
        return np.exp(-0.5 * d2)

    def _refine_tag(self) -> None:
        """Move w_b towards the stored instance tags that best explain D_b."""
        instance = list(self.buffers.instance)
        mine = tuple(float(x) for x in self.tag)
        others = {rec.w_b for rec in self.buffers.global_ if rec.w_b != mine}
        if not instance or not others:
            return
        valid = self.table.valid
        loglik, cands = [], []
        for w in sorted(others):
            counts = np.zeros(self.table.succ.shape)
            for rec in self.buffers.global_:
                if rec.w_b == w:
                    counts[rec.s, rec.a, self.slot(rec.s, rec.a, rec.s_next)] += 1
            probs = np.where(valid, counts + self.smoothing, 0.0)
            probs /= probs.sum(axis=-1, keepdims=True)
            loglik.append(sum(np.log(probs[r.s, r.a, self.slot(r.s, r.a, r.s_next)]) for r in instance))
            cands.append(w)
        ll = np.array(loglik)
        post = np.exp(ll - ll.max())
        post /= post.sum()
        target = post @ np.array(cands, dtype=float)
        self.tag = self.tag + self.tag_lr * (target - self.tag)

    def fit(self, rng: np.random.Generator) -> EnsembleBelief:
        records = list(self.buffers.global_)
        self.members[:] = 0.0
        if not records:
            return self
        weights = self._weights(records)
        weights /= weights.sum()
        s = np.array([r.s for r in records])
        a = np.array([r.a for r in records])
        k = np.array([self.slot(r.s, r.a, r.s_next) for r in records])
        for m in range(self.n_samples):
            pick = rng.choice(len(records), size=len(records), p=weights)
            np.add.at(self.members[m], (s[pick], a[pick], k[pick]), 1.0)
        return self

    def _tune_pass(self, rng):
        self._refine_tag()
        self.fit(rng)

    def transferred(self, transfer: float, tag: np.ndarray) -> EnsembleBelief:
        return EnsembleBelief(self.table, self.members, smoothing=self.smoothing, tag_lr=self.tag_lr,
                              n_samples=self.n_samples, tag=tag, buffers=self.buffers.new_instance())

    def to_dict(self):
        doc = super().to_dict()
        doc["members"] = self.members.tolist()
        doc["smoothing"] = self.smoothing
        return doc


def init_from_previous(prev: TransitionBelief, rng: np.random.Generator, transfer: float = DEFAULT_TRANSFER,
                       latent_dim: int | None = None) -> TransitionBelief:
    """Start the belief for a new MDP from the previous one.

    Draws a fresh latent tag and empties the instance buffer. Dirichlet counts
    keep ``transfer`` of their evidence; ensemble members are copied as is.
    """
    if not 0.0 <= transfer <= 1.0:
        raise ValueError("transfer factor must lie in [0, 1]")
    tag = draw_latent(rng, len(prev.tag) if latent_dim is None else latent_dim)
    return prev.transferred(transfer, tag)


def load_belief(path) -> TransitionBelief:
    doc = json.loads(Path(path).read_text())
    t = doc["table"]
    table = SuccessorTable(np.array(t["succ"], dtype=np.int64), np.array(t["rewards"], dtype=float),
                           np.array(t["terminal"], dtype=bool), float(t["gamma"]))
    common = dict(n_samples=doc["n_samples"], tag=np.array(doc["tag"]))
    if doc["backend"] == DirichletBelief.backend:
        belief = DirichletBelief(table, np.array(doc["alpha"]), **common)
    elif doc["backend"] == EnsembleBelief.backend:
        belief = EnsembleBelief(table, np.array(doc["members"]), smoothing=doc["smoothing"], **common)
    else:
        raise ValueError(f"unknown belief backend {doc['backend']!r}")
    belief.instance_counts = np.array(doc["instance_counts"], dtype=np.int64)
    belief.update_count = int(doc["update_count"])
    return belief


def _pair_epistemic(belief: TransitionBelief, mu: np.ndarray) -> np.ndarray:
    return slot_variance(mu, belief.table.valid)


def dpas_deltas(current: TransitionBelief, previous: TransitionBelief, s: int, a: int,
                subset: Iterable[tuple[int, int]] | None = None, seed: int = 0) -> tuple[float, float]:
    """Change in epistemic variance at ``(s, a)`` and in mean aleatoric spread over ``subset``.

    Both beliefs are sampled from generators seeded identically, so identical
    beliefs give exactly zero deltas. A pair a belief holds no data for,
    neither transferred nor observed, is scored with the flat-prior variance.
    """
    d_e, d_a = _deltas(current, previous, seed, subset)
    return float(d_e[s, a]), d_a


def _deltas(current, previous, seed, subset=None):
    if not current.table.same_structure(previous.table):
        raise ValueError("beliefs must share the successor structure")
    mu_c, sig_c = current.predictive_samples(np.random.default_rng(seed))
    mu_p, sig_p = previous.predictive_samples(np.random.default_rng(seed))
    var_c = _pair_epistemic(current, mu_c)
    var_p = _pair_epistemic(previous, mu_p)
    flat = prior_variance(current.table.valid.sum(axis=-1))
    var_c = np.where(current.has_evidence(), var_c, flat)
    var_p = np.where(previous.has_evidence(), var_p, flat)
    pairs = list(current.evidence_pairs() if subset is None else subset)
    if pairs:
        s_idx, a_idx = np.array(pairs).T
        d_a = float(sig_c.mean(axis=0)[s_idx, a_idx].mean() - sig_p.mean(axis=0)[s_idx, a_idx].mean())
    else:
        d_a = 0.0
    return var_c - var_p, d_a


def dpas_modes(current: TransitionBelief, previous: TransitionBelief, eps_e: float = 0.02, eps_a: float = 0.0,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-pair sampling mode for one search: 0 regular, 1 worst-case.

    Returns ``(modes, delta_e, delta_a)``.
    """
    d_e, d_a = _deltas(current, previous, seed)
    regular = (d_e <= eps_e) & (d_a <= eps_a)
    return np.where(regular, 0, 1).astype(np.int8), d_e, d_a
