"""Synthetic two-domain interaction stream: generator, split, batching.

The generator plants a recoverable preference structure: every user and
author carries a latent vector, behavior labels follow a logistic model in
their dot product, and the user's video/live latents share a configurable
correlation. Live sessions are emitted as one candidate event carrying the
session's final labels (a behavior that fires repeatedly inside a session
still yields a single positive), timestamped at the exposure moment so
history cutoffs stay causal; the unfired behaviors resolve to the zeros on
that same event.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

BEHAVIORS = ("click", "effective_view", "long_view", "like", "comment", "gift")
FEATURES = ("author_id", "page", "tag", "cluster", "play_bucket", "lag_bucket", "label_code")

VIDEO, LIVE = "video", "live"
SECONDS_PER_DAY = 86400

# substream tags for fanning one seed out into independent generators
_STREAM_WORLD = 101
_STREAM_USER = 202


class SideInfo(NamedTuple):
    page: int
    tag: int
    cluster: int
    play_bucket: int
    lag_bucket: int
    label_code: int


class Labels(NamedTuple):
    click: int
    effective_view: int
    long_view: int
    like: int
    comment: int
    gift: int


@dataclass(slots=True)
class InteractionEvent:
    user_id: int
    domain: str
    author_id: int
    timestamp: int
    side_info: SideInfo
    labels: Labels
    session_id: int


@dataclass
class StreamConfig:
    n_users: int = 2000
    n_authors_per_domain: int = 300
    days: int = 8
    exposure_ratio: float = 9.0  # video exposures per live exposure
    rate_click: float = 0.10
    rate_effective_view: float = 0.06
    rate_long_view: float = 0.03
    rate_like: float = 0.01
    rate_comment: float = 0.005
    rate_gift: float = 0.001
    rho: float = 0.9  # cross-domain preference correlation
    seed: int = 0
    events_per_user_day: float = 32.0
    latent_dim: int = 8
    affinity_scale: float = 2.0
    n_pages: int = 8
    n_tags: int = 24
    n_clusters: int = 12
    n_play_buckets: int = 8
    n_lag_buckets: int = 8

    def rates(self):
        return np.array([getattr(self, f"rate_{b}") for b in BEHAVIORS])

    def validate(self):
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.n_authors_per_domain < 1:
            raise ValueError("n_authors_per_domain must be >= 1")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if self.exposure_ratio <= 0:
            raise ValueError("exposure_ratio must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        r = self.rates()
        if np.any(r < 0.0) or np.any(r > 1.0):
            raise ValueError("behavior rates must be in [0, 1]")
        if np.any(np.diff(r) > 0.0):
            raise ValueError(f"behavior rates must be non-increasing click->gift, got {r.tolist()}")
        return self


@dataclass
class UserProfile:
    """Ground-truth latents behind one user's stream (generator-internal)."""

    user_id: int
    z_shared: np.ndarray
    z_video: np.ndarray
    z_live: np.ndarray
    activity: float  # mean events/day

    def latent(self, domain, rho):
        own = self.z_video if domain == VIDEO else self.z_live
        return math.sqrt(rho) * self.z_shared + math.sqrt(1.0 - rho) * own


@dataclass
class World:
    """Shared ground truth: author latents and their categorical attributes.

    Author j in the video domain and author j in the live domain share one
    latent (and tag/cluster), which is what makes cross-domain transfer
    learnable and measurable.
    """

    config: StreamConfig
    author_latent: np.ndarray  # [n_authors, latent_dim]
    author_page: np.ndarray
    author_tag: np.ndarray
    author_cluster: np.ndarray

    def user_profile(self, user_id):
        cfg = self.config
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_USER, user_id]))
        d = cfg.latent_dim
        scale = 1.0 / math.sqrt(d)
        z_shared = rng.normal(0.0, scale, d)
        z_video = rng.normal(0.0, scale, d)
        z_live = rng.normal(0.0, scale, d)
        activity = max(1.0, cfg.events_per_user_day * rng.lognormal(0.0, 0.4))
        return UserProfile(user_id, z_shared, z_video, z_live, activity)

    def author_scores(self, profile, domain):
        """Ground-truth affinity of one user for every author in a domain."""
        return self.author_latent @ profile.latent(domain, self.config.rho)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logit(p):
    return math.log(p / (1.0 - p))


def build_world(cfg):
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_WORLD]))
    n, d = cfg.n_authors_per_domain, cfg.latent_dim
    latent = rng.normal(0.0, 1.0 / math.sqrt(d), size=(n, d))
    tag_protos = rng.normal(0.0, 1.0, size=(cfg.n_tags, d))
    cluster_protos = rng.normal(0.0, 1.0, size=(cfg.n_clusters, d))
    return World(
        config=cfg,
        author_latent=latent,
        author_page=rng.integers(0, cfg.n_pages, size=n),
        author_tag=np.argmax(latent @ tag_protos.T, axis=1),
        author_cluster=np.argmax(latent @ cluster_protos.T, axis=1),
    )


def _lag_bucket(gaps, n_buckets):
    # log2-spaced recency buckets, minutes-scale
    return np.minimum(np.log2(1.0 + gaps / 60.0).astype(np.int64), n_buckets - 1)


def _user_events(world, profile):
    cfg = world.config
    uid = profile.user_id
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_USER, uid, 1]))

    counts = rng.poisson(profile.activity, size=cfg.days)
    n = int(counts.sum())
    if n == 0:
        return []
    times = np.concatenate(
        [np.sort(rng.integers(d * SECONDS_PER_DAY, (d + 1) * SECONDS_PER_DAY, size=c))
         for d, c in enumerate(counts)]
    )
    p_live = 1.0 / (1.0 + cfg.exposure_ratio)
    is_live = rng.random(n) < p_live
    authors = rng.integers(0, cfg.n_authors_per_domain, size=n)

    u_video = profile.latent(VIDEO, cfg.rho)
    u_live = profile.latent(LIVE, cfg.rho)
    dots = np.where(is_live, world.author_latent[authors] @ u_live,
                    world.author_latent[authors] @ u_video)
    affinity = cfg.affinity_scale * dots

    # play-duration fraction: preference plus viewing noise
    play_frac = _sigmoid(affinity + rng.normal(0.0, 1.0, size=n))
    play = np.minimum((play_frac * cfg.n_play_buckets).astype(np.int64), cfg.n_play_buckets - 1)

    # recency gap to the user's previous event in the same domain
    lag = np.zeros(n, dtype=np.int64)
    for mask in (is_live, ~is_live):
        idx = np.flatnonzero(mask)
        if idx.size:
            gaps = np.empty(idx.size, dtype=np.float64)
            gaps[0] = SECONDS_PER_DAY  # no previous event: coldest bucket source
            gaps[1:] = np.diff(times[idx])
            lag[idx] = _lag_bucket(gaps, cfg.n_lag_buckets)

    # video behaviors: independent long-view / like given the affinity
    vid_long = rng.random(n) < _sigmoid(affinity + _logit(0.30))
    vid_like = rng.random(n) < _sigmoid(affinity + _logit(0.08))

    # live behaviors: conditional chain so marginals stay logistic and the
    # hierarchy gift => ... => click holds by construction
    biases = np.array([_logit(r) for r in cfg.rates()])
    probs = _sigmoid(affinity[:, None] + biases[None, :])  # [n, 6] marginals
    draws = rng.random((n, 6))
    y = np.zeros((n, 6), dtype=np.int8)
    y[:, 0] = draws[:, 0] < probs[:, 0]
    for b in range(1, 6):
        cond = probs[:, b] / probs[:, b - 1]
        y[:, b] = (y[:, b - 1] == 1) & (draws[:, b] < cond)

    events = []
    session = 0
    for i in range(n):
        a = int(authors[i])
        side_common = (int(world.author_page[a]), int(world.author_tag[a]),
                       int(world.author_cluster[a]), int(play[i]), int(lag[i]))
        if is_live[i]:
            labels = Labels(*(int(v) for v in y[i]))
            label_code = int(y[i].sum())  # 0..6: deepest behavior reached
            events.append(InteractionEvent(
                user_id=uid, domain=LIVE, author_id=a, timestamp=int(times[i]),
                side_info=SideInfo(*side_common[:3], side_common[3], side_common[4], label_code),
                labels=labels, session_id=session,
            ))
        else:
            label_code = int(vid_long[i]) + 2 * int(vid_like[i])  # 0..3
            events.append(InteractionEvent(
                user_id=uid, domain=VIDEO, author_id=a, timestamp=int(times[i]),
                side_info=SideInfo(*side_common[:3], side_common[3], side_common[4], label_code),
                labels=Labels(0, 0, 0, 0, 0, 0), session_id=session,
            ))
        session += 1
    return events


def generate_stream(cfg):
    """Full event stream for a config, ordered by time. Deterministic."""
    world = build_world(cfg)
    events = []
    for uid in range(cfg.n_users):
        events.extend(_user_events(world, world.user_profile(uid)))
    events.sort(key=lambda e: (e.timestamp, e.user_id, e.session_id))
    return events


def split_train_test(events, train_days):
    """First `train_days` days for training, the following day for testing."""
    boundary = train_days * SECONDS_PER_DAY
    if not events or events[-1].timestamp < boundary:
        raise ValueError(f"stream does not span more than {train_days} days")
    train = [e for e in events if e.timestamp < boundary]
    test = [e for e in events if boundary <= e.timestamp < boundary + SECONDS_PER_DAY]
    if not test:
        raise ValueError("test day is empty")
    return train, test


# -- dataset files -----------------------------------------------------------

SCHEMA_VERSION = 1


def write_events(path, events):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION}) + "\n")
        for e in events:
            fh.write(json.dumps({
                "user_id": e.user_id,
                "domain": e.domain,
                "author_id": e.author_id,
                "timestamp": e.timestamp,
                "side_info": e.side_info._asdict(),
                "labels": e.labels._asdict(),
                "session_id": e.session_id,
            }) + "\n")


def read_events(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        version = header.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported dataset schema_version {version}")
        events = []
        for line in fh:
            d = json.loads(line)
            events.append(InteractionEvent(
                user_id=d["user_id"], domain=d["domain"], author_id=d["author_id"],
                timestamp=d["timestamp"], side_info=SideInfo(**d["side_info"]),
                labels=Labels(**d["labels"]), session_id=d["session_id"],
            ))
    return events


# -- batching ---------------------------------------------------------------


@dataclass
class Samples:
    """Index-encoded training samples; one row per live candidate event."""

    video_idx: np.ndarray  # [N, L, n_features] int32, 0 = padding
    video_mask: np.ndarray  # [N, L] float64
    live_idx: np.ndarray
    live_mask: np.ndarray
    cand_idx: np.ndarray  # [N, n_features]
    labels: np.ndarray  # [N, 6] int8
    user_ids: np.ndarray
    timestamps: np.ndarray

    def __len__(self):
        return self.cand_idx.shape[0]

    def slice(self, order):
        return Samples(
            video_idx=self.video_idx[order], video_mask=self.video_mask[order],
            live_idx=self.live_idx[order], live_mask=self.live_mask[order],
            cand_idx=self.cand_idx[order], labels=self.labels[order],
            user_ids=self.user_ids[order], timestamps=self.timestamps[order],
        )


def _encode(event, vocab, domain):
    cards = vocab.cards(domain)
    row = []
    values = (event.author_id, event.side_info.page, event.side_info.tag,
              event.side_info.cluster, event.side_info.play_bucket,
              event.side_info.lag_bucket, event.side_info.label_code)
    for feat, value in zip(FEATURES, values):
        if not 0 <= value < cards[feat]:
            raise ValueError(
                f"vocab mismatch: {domain} feature '{feat}' index {value} "
                f"outside cardinality {cards[feat]}"
            )
        row.append(value + 1)  # shift: 0 is the padding index
    return row


def _encode_candidate(event, vocab):
    # outcome-derived features of the candidate itself (play duration and
    # the resolved label code) are unknown at prediction time: padded out
    row = _encode(event, vocab, LIVE)
    row[FEATURES.index("play_bucket")] = 0
    row[FEATURES.index("label_code")] = 0
    return row


def assemble_samples(events, vocab, max_len, candidate_filter=None):
    """Index-encode one sample per live candidate event.

    Histories are the most recent <= max_len events of each domain strictly
    before the candidate's timestamp, oldest first, right-padded.
    """
    n_feat = len(FEATURES)
    by_user = {}
    for e in events:
        by_user.setdefault(e.user_id, []).append(e)

    rows = []
    for uid, user_events in by_user.items():
        hist = {VIDEO: [], LIVE: []}
        pending = []  # same-timestamp events not yet visible as history
        for e in user_events:
            while pending and pending[0].timestamp < e.timestamp:
                past = pending.pop(0)
                hist[past.domain].append(_encode(past, vocab, past.domain))
            if e.domain == LIVE and (candidate_filter is None or candidate_filter(e)):
                rows.append((uid, e.timestamp, list(e.labels),
                             _encode_candidate(e, vocab),
                             hist[VIDEO][-max_len:], hist[LIVE][-max_len:]))
            pending.append(e)

    n = len(rows)
    out = Samples(
        video_idx=np.zeros((n, max_len, n_feat), dtype=np.int32),
        video_mask=np.zeros((n, max_len)),
        live_idx=np.zeros((n, max_len, n_feat), dtype=np.int32),
        live_mask=np.zeros((n, max_len)),
        cand_idx=np.zeros((n, n_feat), dtype=np.int32),
        labels=np.zeros((n, 6), dtype=np.int8),
        user_ids=np.zeros(n, dtype=np.int64),
        timestamps=np.zeros(n, dtype=np.int64),
    )
    for i, (uid, ts, labels, cand, vid_hist, live_hist) in enumerate(rows):
        out.user_ids[i] = uid
        out.timestamps[i] = ts
        out.labels[i] = labels
        out.cand_idx[i] = cand
        if vid_hist:
            out.video_idx[i, :len(vid_hist)] = vid_hist
            out.video_mask[i, :len(vid_hist)] = 1.0
        if live_hist:
            out.live_idx[i, :len(live_hist)] = live_hist
            out.live_mask[i, :len(live_hist)] = 1.0
    return out


def iter_batches(samples, batch_size, order=None):
    n = len(samples)
    order = np.arange(n) if order is None else np.asarray(order)
    for start in range(0, n, batch_size):
        yield samples.slice(order[start:start + batch_size])


def build_batches(events, vocab, max_len, batch_size, candidate_filter=None):
    """Iterator of index-encoded batches, one sample per live candidate."""
    samples = assemble_samples(events, vocab, max_len, candidate_filter)
    return iter_batches(samples, batch_size)
