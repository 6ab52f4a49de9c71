"""Session datasets: the AGT1 file format, a planted-structure generator, and
participant-level splits.

AGT1 layout (little-endian)::

    magic b"AGT1" | version u32 | p u32 | session_count u64
    per session:
        participant_id  u16 length + UTF-8
        session_id      u16 length + UTF-8
        label           u8   (0 natural reading, 1 task-specific reading)
        n               u32
        features        p*n f64, row-major (p rows, n fixation columns)

A path ending in ``.json`` uses the JSON mirror of the same fields.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, ParameterError
from .preprocess import BandSequence

MAGIC = b"AGT1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
DEFAULT_SPLIT = (12, 2, 4)


@dataclass
class SessionSample:
    sequence: BandSequence
    label: int
    participant_id: str
    session_id: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ParameterError(f"label must be 0 or 1, got {self.label}")
        if not self.participant_id:
            raise ParameterError("participant id must be non-empty")

    @property
    def features(self) -> np.ndarray:
        return self.sequence.valid_features()


@dataclass
class SplitSpec:
    train: list[str]
    val: list[str]
    test: list[str]

    def __post_init__(self):
        sets = [set(self.train), set(self.val), set(self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ConfigError("split participant lists overlap")


# ---------------------------------------------------------------- file format

def _dataset_p(samples: Sequence[SessionSample], p: int | None) -> int:
    if p is None:
        p = samples[0].sequence.p if samples else 0
    for i, s in enumerate(samples):
        if s.sequence.p != p:
            raise DimensionError(f"record {i + 1}: p={s.sequence.p} differs from p={p}")
    return p


def encode_agt1(samples: Sequence[SessionSample], p: int | None = None) -> bytes:
    p = _dataset_p(samples, p)
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, p, len(samples)))
    for s in samples:
        for text in (s.participant_id, s.session_id):
            raw = text.encode("utf-8")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
        feats = np.ascontiguousarray(s.features, dtype="<f8")
        buf.write(struct.pack("<BI", s.label, feats.shape[1]))
        buf.write(feats.tobytes())
    return buf.getvalue()


def decode_agt1(data: bytes) -> tuple[int, list[SessionSample]]:
    view = memoryview(data)
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header at byte 0 ({len(data)} bytes)")
    magic, version, p, count = _HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown format version {version} at byte 4")
    offset = _HEADER.size
    samples = []

    def take(size: int, record: int, what: str) -> memoryview:
        nonlocal offset
        if offset + size > len(data):
            raise FormatError(f"record {record}: truncated {what} at byte {offset}")
        chunk = view[offset:offset + size]
        offset += size
        return chunk

    for rec in range(1, count + 1):
        ids = []
        for what in ("participant id", "session id"):
            (length,) = struct.unpack("<H", take(2, rec, what + " length"))
            try:
                ids.append(bytes(take(length, rec, what)).decode("utf-8"))
            except UnicodeDecodeError:
                raise FormatError(f"record {rec}: {what} is not UTF-8 (byte {offset})") from None
        label, n = struct.unpack("<BI", take(5, rec, "label/length"))
        if label not in (0, 1):
            raise FormatError(f"record {rec}: label {label} not in {{0, 1}} (byte {offset - 5})")
        raw = take(8 * p * n, rec, "feature matrix")
        feats = np.frombuffer(raw, dtype="<f8").reshape(p, n).astype(np.float64)
        samples.append(SessionSample(BandSequence.from_features(feats), label, ids[0], ids[1]))
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after record {count} "
                          f"(byte {offset})")
    return p, samples


def encode_json(samples: Sequence[SessionSample], p: int | None = None) -> str:
    p = _dataset_p(samples, p)
    doc = {
        "format": MAGIC.decode(),
        "version": FORMAT_VERSION,
        "p": p,
        "sessions": [
            {
                "participant_id": s.participant_id,
                "session_id": s.session_id,
                "label": s.label,
                "n": int(s.features.shape[1]),
                "features": s.features.tolist(),
            }
            for s in samples
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def decode_json(text: str) -> tuple[int, list[SessionSample]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON at byte {exc.pos}: {exc.msg}") from None
    if doc.get("format") != MAGIC.decode():
        raise FormatError("JSON mirror lacks format 'AGT1'")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unknown format version {doc.get('version')}")
    p = doc.get("p")
    if not isinstance(p, int) or p < 0:
        raise FormatError(f"invalid p {p!r}")
    samples = []
    for rec, entry in enumerate(doc.get("sessions", []), start=1):
        try:
            feats = np.asarray(entry["features"], dtype=np.float64)
            n = int(entry["n"])
            label = int(entry["label"])
            pid, sid = str(entry["participant_id"]), str(entry["session_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"record {rec}: malformed session ({exc})") from None
        if feats.size == 0:
            feats = feats.reshape(p, 0)
        if feats.ndim != 2 or feats.shape[0] != p:
            raise DimensionError(f"record {rec}: feature rows {feats.shape[0] if feats.ndim else 0} "
                                 f"differ from p={p}")
        if feats.shape[1] != n:
            raise DimensionError(f"record {rec}: n={n} but matrix has {feats.shape[1]} columns")
        if label not in (0, 1):
            raise FormatError(f"record {rec}: label {label} not in {{0, 1}}")
        samples.append(SessionSample(BandSequence.from_features(feats), label, pid, sid))
    return p, samples


def save_dataset(samples: Sequence[SessionSample], path: str | Path, p: int | None = None) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(encode_json(samples, p))
    else:
        path.write_bytes(encode_agt1(samples, p))


def read_dataset(path: str | Path) -> tuple[int, list[SessionSample]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".json":
        return decode_json(path.read_text())
    return decode_agt1(path.read_bytes())


def load_dataset(path: str | Path) -> list[SessionSample]:
    return read_dataset(path)[1]


# ---------------------------------------------------------------- synthetic data

@dataclass
class PlantedWorld:
    """Ground-truth graph plus the signal process used to generate sessions.

    Both classes share a stationary AR(1) background and small events that
    travel along the planted edges with a one-step lag. Task-specific sessions
    add large spikes that travel the same way.
    """

    adjacency: np.ndarray
    spike_amplitude: float = 4.0
    background_amplitude: float = 1.0
    noise_sigma: float = 0.3
    ar_coefficient: float = 0.7
    attenuation: float = 0.8
    lag: int = 1
    events_per_session: int = 16
    min_length: int = 24
    max_length: int = 40
    participant_gain: float = 0.2

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        if np.any(np.diag(self.adjacency)):
            raise ParameterError("planted graph must not contain self-loops")

    @property
    def p(self) -> int:
        return self.adjacency.shape[0]

    @property
    def density(self) -> float:
        p = self.p
        return float(self.adjacency.sum() / (p * (p - 1)))

    @classmethod
    def random(cls, p: int = 16, out_degree: int = 1,
               rng: np.random.Generator | None = None, **kwargs) -> "PlantedWorld":
        rng = rng or np.random.default_rng(0)
        adj = np.zeros((p, p))
        for u in range(p):
            targets = rng.choice([v for v in range(p) if v != u], size=out_degree, replace=False)
            adj[u, targets] = 1.0
        return cls(adj, **kwargs)


def _simulate(world: PlantedWorld, label: int, gain: float,
              rng: np.random.Generator) -> np.ndarray:
    p = world.p
    n = int(rng.integers(world.min_length, world.max_length + 1))
    drive = np.zeros((p, n))
    amplitude = world.spike_amplitude if label == 1 else world.background_amplitude
    children = [np.flatnonzero(world.adjacency[u]) for u in range(p)]
    for _ in range(world.events_per_session):
        u = int(rng.integers(p))
        t0 = int(rng.integers(n - world.lag))
        drive[u, t0] += amplitude * gain
        for v in children[u]:
            drive[v, t0 + world.lag] += amplitude * gain * world.attenuation
    a = world.ar_coefficient
    innovation = world.noise_sigma * np.sqrt(1.0 - a * a) * rng.standard_normal((p, n))
    x = np.zeros((p, n))
    x[:, 0] = world.noise_sigma * rng.standard_normal(p) + drive[:, 0]
    for t in range(1, n):
        x[:, t] = a * x[:, t - 1] + innovation[:, t] + drive[:, t]
    return x


def generate_synthetic(world: PlantedWorld, n_sessions: int, n_participants: int,
                       rng: np.random.Generator | int = 0,
                       tsr_fraction: float = 0.5) -> list[SessionSample]:
    if n_participants < 3:
        raise ConfigError("need at least 3 participants so train/val/test splits exist")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n_tsr = int(round(n_sessions * tsr_fraction))
    labels = np.array([1] * n_tsr + [0] * (n_sessions - n_tsr))
    rng.shuffle(labels)
    gains = 1.0 + world.participant_gain * rng.uniform(-1.0, 1.0, size=n_participants)
    samples = []
    for i, label in enumerate(labels):
        who = i % n_participants
        feats = _simulate(world, int(label), gains[who], rng)
        samples.append(SessionSample(BandSequence.from_features(feats), int(label),
                                     f"P{who:02d}", f"s{i:04d}"))
    return samples


def default_world(seed: int = 0, p: int = 16) -> PlantedWorld:
    return PlantedWorld.random(p=p, out_degree=1, rng=np.random.default_rng(seed))


def threshold_oracle_accuracy(samples: Sequence[SessionSample],
                              threshold: float | None = None) -> tuple[float, float]:
    """Classify by the session's peak feature value against one threshold.

    With no threshold given, the best one over all observed peaks is used.
    Returns (accuracy, threshold).
    """
    peaks = np.array([s.features.max() for s in samples])
    labels = np.array([s.label for s in samples])
    candidates = [threshold] if threshold is not None else np.unique(peaks)
    best = (0.0, 0.0)
    for th in candidates:
        acc = float(np.mean((peaks >= th).astype(int) == labels))
        if acc > best[0]:
            best = (acc, float(th))
    return best


# ---------------------------------------------------------------- splits

def _apportion(total: int, ratios: Sequence[float]) -> list[int]:
    if total < len(ratios):
        raise ConfigError(f"{total} participants cannot fill {len(ratios)} splits")
    weights = np.asarray(ratios, dtype=np.float64)
    quotas = total * weights / weights.sum()
    counts = np.maximum(1, np.floor(quotas)).astype(int)
    while counts.sum() < total:
        counts[int(np.argmax(quotas - counts))] += 1
    while counts.sum() > total:
        over = np.where(counts > 1, counts - quotas, -np.inf)
        counts[int(np.argmax(over))] -= 1
    return counts.tolist()


def make_split(participants: Sequence[str], ratios: Sequence[float] = DEFAULT_SPLIT,
               seed: int = 0) -> SplitSpec:
    people = sorted(set(participants))
    counts = _apportion(len(people), ratios)
    order = [people[i] for i in np.random.default_rng(seed).permutation(len(people))]
    a, b = counts[0], counts[0] + counts[1]
    return SplitSpec(order[:a], order[a:b], order[b:])


def split_by_participant(samples: Sequence[SessionSample], spec: SplitSpec | None = None,
                         ratios: Sequence[float] = DEFAULT_SPLIT, seed: int = 0
                         ) -> tuple[list[SessionSample], list[SessionSample], list[SessionSample]]:
    people = {s.participant_id for s in samples}
    if spec is None:
        spec = make_split(sorted(people), ratios, seed)
    elif people - set(spec.train) - set(spec.val) - set(spec.test):
        raise ConfigError("split does not cover every participant")
    groups = {"train": set(spec.train), "val": set(spec.val), "test": set(spec.test)}
    out = {k: [s for s in samples if s.participant_id in v] for k, v in groups.items()}
    return out["train"], out["val"], out["test"]
