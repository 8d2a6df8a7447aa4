"""Language identification: text classifier, audio predictions, agreement filter.

The text model is a multinomial logistic regression over hashed character
n-gram counts -- bounded memory regardless of corpus size, deterministic
training given (corpus order, config). Audio LID is an external input
consumed from a prediction file. The filter keeps an utterance only when its
declared label agrees with both predictions after ISO-639-3 canonicalization;
prediction confidence is recorded but never thresholded.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cleanspeech.errors import (
    DataError,
    DuplicateUtteranceId,
    EmptyDocument,
    MissingAudioPrediction,
    SchemaViolation,
    SingleClassCorpus,
)
from cleanspeech.languages import LanguageTable, default_table
from cleanspeech.resegment import AlignedUtterance

MODEL_MAGIC = b"TLID"
MODEL_VERSION = 1
DEFAULT_ORDERS = (1, 2, 3)
DEFAULT_BUCKETS = 2**18
UNDETERMINED = "und"


@dataclass(frozen=True)
class LidTrainConfig:
    orders: tuple[int, ...] = DEFAULT_ORDERS
    buckets: int = DEFAULT_BUCKETS
    epochs: int = 10
    learning_rate: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.buckets & (self.buckets - 1) or self.buckets <= 0:
            raise ValueError("buckets must be a power of two")
        if not self.orders or any(o < 1 for o in self.orders):
            raise ValueError("orders must be positive")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("epochs and learning_rate must be positive")


@dataclass(frozen=True)
class TextLidModel:
    """Linear classifier over hashed char n-grams; labels sorted, weights f32."""

    labels: tuple[str, ...]
    weights: np.ndarray  # (L, D) float32
    bias: np.ndarray  # (L,) float32
    orders: tuple[int, ...] = DEFAULT_ORDERS

    @property
    def buckets(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class LidVerdict:
    utterance_id: str
    declared: str
    text_pred: tuple[str, float]
    audio_pred: tuple[str, float]
    keep: bool


def _features(text: str, orders: tuple[int, ...], buckets: int) -> tuple[np.ndarray, np.ndarray]:
    """Hashed bag-of-ngrams, L1-normalized. Returns (bucket indices, values)."""
    text = " ".join(text.lower().split())
    counts: dict[int, float] = {}
    for order in orders:
        for i in range(len(text) - order + 1):
            bucket = zlib.crc32(text[i : i + order].encode("utf-8")) & (buckets - 1)
            counts[bucket] = counts.get(bucket, 0.0) + 1.0
    if not counts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idx = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    vals = np.asarray([counts[i] for i in idx], dtype=np.float64)
    return idx, vals / vals.sum()


def train_text_lid(corpus: list[tuple[str, str]], config: LidTrainConfig = LidTrainConfig()) -> TextLidModel:
    """SGD on multinomial logistic regression; bitwise-reproducible by seed."""
    config.validate()
    labels = sorted({label for _, label in corpus})
    if len(labels) < 2:
        raise SingleClassCorpus(f"corpus has {len(labels)} distinct label(s); need >= 2")
    for i, (text, _) in enumerate(corpus):
        if not text.strip():
            raise EmptyDocument(i)
    label_index = {label: k for k, label in enumerate(labels)}

    feats = [_features(text, config.orders, config.buckets) for text, _ in corpus]
    targets = np.asarray([label_index[label] for _, label in corpus])

    L, D = len(labels), config.buckets
    weights = np.zeros((L, D), dtype=np.float64)
    bias = np.zeros(L, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        for i in rng.permutation(len(corpus)):
            idx, vals = feats[i]
            scores = weights[:, idx] @ vals + bias
            scores -= scores.max()
            probs = np.exp(scores)
            probs /= probs.sum()
            probs[targets[i]] -= 1.0
            weights[:, idx] -= config.learning_rate * np.outer(probs, vals)
            bias -= config.learning_rate * probs

    return TextLidModel(
        labels=tuple(labels),
        weights=weights.astype(np.float32),
        bias=bias.astype(np.float32),
        orders=config.orders,
    )


def predict_text_lid(model: TextLidModel, text: str) -> tuple[str, float]:
    """Argmax over softmax scores; ties go to the lexicographically smaller
    label (labels are stored sorted). Empty text yields ("und", 0.0)."""
    if not text.strip():
        return (UNDETERMINED, 0.0)
    idx, vals = _features(text, model.orders, model.buckets)
    if idx.shape[0] == 0:
        return (UNDETERMINED, 0.0)
    scores = (model.weights[:, idx].astype(np.float64) @ vals) + model.bias.astype(np.float64)
    scores -= scores.max()
    probs = np.exp(scores)
    probs /= probs.sum()
    k = int(np.argmax(probs))  # first max = lexicographically smallest label
    return (model.labels[k], float(probs[k]))


def save_text_lid(path: Path, model: TextLidModel) -> None:
    """Write the ``TLID`` binary format (little-endian).

    The format fixes the n-gram orders to the defaults; models trained with
    other orders cannot be serialized as version 1.
    """
    if tuple(model.orders) != DEFAULT_ORDERS:
        raise ValueError(f"TLID v{MODEL_VERSION} only stores orders {DEFAULT_ORDERS}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", MODEL_MAGIC, MODEL_VERSION, len(model.labels), model.buckets))
        for label in model.labels:
            raw = label.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(model.bias, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.weights, dtype="<f4").tobytes())


def load_text_lid(path: Path) -> TextLidModel:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16:
        raise DataError(f"{path}: truncated model file")
    magic, version, num_labels, buckets = struct.unpack_from("<4sIII", blob, 0)
    if magic != MODEL_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    offset = 16
    labels = []
    for _ in range(num_labels):
        (length,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        labels.append(blob[offset : offset + length].decode("utf-8"))
        offset += length
    bias = np.frombuffer(blob, dtype="<f4", count=num_labels, offset=offset)
    offset += 4 * num_labels
    weights = np.frombuffer(blob, dtype="<f4", count=num_labels * buckets, offset=offset)
    if offset + 4 * num_labels * buckets != len(blob):
        raise DataError(f"{path}: payload size mismatch")
    return TextLidModel(
        labels=tuple(labels),
        weights=weights.reshape(num_labels, buckets),
        bias=bias,
    )


def load_audio_lid(path: Path) -> dict[str, tuple[str, float]]:
    """Read line-delimited {utterance_id, language, prob} predictions."""
    path = Path(path)
    preds: dict[str, tuple[str, float]] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(lineno, f"invalid JSON: {exc.msg}") from None
        for key, kind in (("utterance_id", str), ("language", str), ("prob", (int, float))):
            if key not in obj:
                raise SchemaViolation(lineno, f"missing field {key!r}")
            if not isinstance(obj[key], kind):
                raise SchemaViolation(lineno, f"field {key!r} has type {type(obj[key]).__name__}")
        prob = float(obj["prob"])
        if not 0.0 <= prob <= 1.0:
            raise SchemaViolation(lineno, f"prob {prob} outside [0, 1]")
        utterance_id = obj["utterance_id"]
        if utterance_id in preds:
            raise DuplicateUtteranceId(lineno, utterance_id)
        preds[utterance_id] = (obj["language"], prob)
    return preds


def lid_agreement_filter(
    utterances: list[AlignedUtterance],
    text_model: TextLidModel,
    audio_preds: dict[str, tuple[str, float]],
    languages: LanguageTable | None = None,
) -> tuple[list[AlignedUtterance], list[LidVerdict]]:
    """Keep an utterance iff declared == text prediction == audio prediction.

    Codes are canonicalized to ISO-639-3 before comparison. Every utterance
    must have an audio prediction; missing ids abort with the full list.
    """
    table = languages or default_table()
    missing = [u.utterance_id for u in utterances if u.utterance_id not in audio_preds]
    if missing:
        raise MissingAudioPrediction(missing)

    kept: list[AlignedUtterance] = []
    verdicts: list[LidVerdict] = []
    for utt in utterances:
        text_code, text_prob = predict_text_lid(text_model, utt.text)
        audio_code, audio_prob = audio_preds[utt.utterance_id]
        declared = table.canonicalize(utt.language)
        keep = declared == table.canonicalize(text_code) == table.canonicalize(audio_code)
        verdicts.append(
            LidVerdict(
                utterance_id=utt.utterance_id,
                declared=utt.language,
                text_pred=(text_code, text_prob),
                audio_pred=(audio_code, audio_prob),
                keep=keep,
            )
        )
        if keep:
            kept.append(utt)
    return kept, verdicts
