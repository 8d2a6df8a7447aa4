"""On-disk formats and loaders for the pipeline's inputs.

Covers the posterior binary format (magic ``CTCP``), the recording manifest
(line-delimited JSON), and the tokenizer table (TSV). Loaded objects are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cleanspeech.errors import (
    DuplicateRecordingId,
    DimensionOverflow,
    MalformedHeader,
    SchemaViolation,
    UnknownLanguageCode,
    UnnormalizedRow,
)
from cleanspeech.languages import LanguageTable, default_table

POSTERIOR_MAGIC = b"CTCP"
POSTERIOR_VERSION = 1
_HEADER = struct.Struct("<4sIQQd")  # magic, version, num_frames, vocab_size, frame_shift

DEFAULT_FRAME_SHIFT = 0.08  # seconds of audio per posterior frame
ROW_NORM_TOLERANCE = 1e-3  # |logsumexp| allowed per row
DEFAULT_MAX_ELEMENTS = 2**28  # ~1 GiB of f32 cells

BLANK_TOKEN = "<blank>"
BLANK_ID = 0


@dataclass(frozen=True)
class FrameLogPosteriors:
    """T x V natural-log probabilities over a token vocabulary, blank at 0."""

    values: np.ndarray  # float32, shape (num_frames, vocab_size)
    frame_shift: float = DEFAULT_FRAME_SHIFT

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.values.shape[1]

    def duration_s(self) -> float:
        return self.num_frames * self.frame_shift


def _validate_rows(values: np.ndarray) -> None:
    # logsumexp per row; -inf entries are legitimate (hard zeros).
    with np.errstate(over="ignore", invalid="ignore"):
        m = np.max(values, axis=1)
        finite = np.isfinite(m)
        lse = np.where(finite, m, -np.inf).astype(np.float64)
        if finite.any():
            shifted = values[finite].astype(np.float64) - lse[finite, None]
            lse[finite] += np.log(np.sum(np.exp(shifted), axis=1))
    bad = ~(np.abs(lse) <= ROW_NORM_TOLERANCE)
    if bad.any():
        row = int(np.argmax(bad))
        raise UnnormalizedRow(row, float(lse[row]))


def write_posteriors(path: Path, posteriors: FrameLogPosteriors) -> None:
    """Write the ``CTCP`` binary format (little-endian, f32 row-major)."""
    values = np.ascontiguousarray(posteriors.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                POSTERIOR_MAGIC,
                POSTERIOR_VERSION,
                posteriors.num_frames,
                posteriors.vocab_size,
                posteriors.frame_shift,
            )
        )
        fh.write(values.tobytes())


def load_posteriors(path: Path, max_elements: int = DEFAULT_MAX_ELEMENTS) -> FrameLogPosteriors:
    """Load and validate a ``CTCP`` file.

    Raises MalformedHeader on a bad magic/version or impossible dimensions,
    DimensionOverflow when T*V exceeds `max_elements`, and UnnormalizedRow
    when a row is not a log-probability distribution (tolerance 1e-3 in
    logsumexp) -- the signature of a corrupted or linear-domain file.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise MalformedHeader(f"{path}: truncated header")
        magic, version, num_frames, vocab_size, frame_shift = _HEADER.unpack(header)
        if magic != POSTERIOR_MAGIC:
            raise MalformedHeader(f"{path}: bad magic {magic!r}")
        if version != POSTERIOR_VERSION:
            raise MalformedHeader(f"{path}: unsupported version {version}")
        if num_frames < 1 or vocab_size < 2:
            raise MalformedHeader(f"{path}: impossible shape {num_frames}x{vocab_size}")
        if not (frame_shift > 0.0):
            raise MalformedHeader(f"{path}: non-positive frame_shift {frame_shift}")
        if num_frames * vocab_size > max_elements:
            raise DimensionOverflow(
                f"{path}: {num_frames}x{vocab_size} exceeds budget of {max_elements} elements"
            )
        payload = fh.read(num_frames * vocab_size * 4 + 1)
    if len(payload) != num_frames * vocab_size * 4:
        raise MalformedHeader(f"{path}: payload size mismatch")
    values = np.frombuffer(payload, dtype="<f4").reshape(num_frames, vocab_size)
    _validate_rows(values)
    return FrameLogPosteriors(values=values, frame_shift=frame_shift)


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class NormalizationRules:
    """Ordered text rewrites applied before tokenization.

    Bracketed tags ("[Music]") are removed first so annotation markup never
    reaches the vocabulary; then lowercasing, punctuation stripping, and
    whitespace collapsing, in that order.
    """

    strip_bracketed: bool = True
    lowercase: bool = True
    punctuation: str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~«»¡¿。、，！？"
    collapse_whitespace: bool = True

    def apply(self, text: str) -> str:
        if self.strip_bracketed:
            text = re.sub(r"\[[^\]]*\]|\([^)]*\)", " ", text)
        if self.lowercase:
            text = text.lower()
        if self.punctuation:
            text = text.translate({ord(c): " " for c in self.punctuation})
        if self.collapse_whitespace:
            text = " ".join(text.split())
        return text.strip()


@dataclass(frozen=True)
class Tokenizer:
    """Greedy longest-match tokenizer over a flat vocabulary table."""

    token_to_id: dict[str, int]
    blank_id: int = BLANK_ID
    normalization: NormalizationRules = field(default_factory=NormalizationRules)

    @property
    def vocab_size(self) -> int:
        return len(self.token_to_id)

    def __post_init__(self):
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise SchemaViolation(0, "token ids are not dense in [0, V)")
        if self.token_to_id.get(BLANK_TOKEN) != self.blank_id:
            raise SchemaViolation(0, f"{BLANK_TOKEN!r} must map to id {self.blank_id}")
        # longest-match scan bound; blank never participates in matching
        object.__setattr__(
            self,
            "_max_token_len",
            max((len(t) for t in self.token_to_id if t != BLANK_TOKEN), default=1),
        )


def tokenize(tokenizer: Tokenizer, text: str) -> tuple[list[int], int]:
    """Normalize then greedily tokenize; returns (ids, dropped_char_count).

    Total: every input yields an id sequence. Whitespace acts as a separator
    and is skipped without counting; characters no token covers are dropped
    and counted. The blank token never matches.
    """
    text = tokenizer.normalization.apply(text)
    vocab = tokenizer.token_to_id
    max_len = tokenizer._max_token_len
    ids: list[int] = []
    dropped = 0
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        for length in range(min(max_len, n - i), 0, -1):
            piece = text[i : i + length]
            if piece != BLANK_TOKEN and piece in vocab:
                ids.append(vocab[piece])
                i += length
                break
        else:
            dropped += 1
            i += 1
    return ids, dropped


def write_tokenizer(path: Path, tokenizer: Tokenizer) -> None:
    """Write a `token<TAB>id` table; the blank line is mandatory."""
    lines = [f"{token}\t{idx}" for token, idx in sorted(tokenizer.token_to_id.items(), key=lambda kv: kv[1])]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_tokenizer(path: Path, normalization: NormalizationRules | None = None) -> Tokenizer:
    path = Path(path)
    token_to_id: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        token, sep, idx = raw.partition("\t")
        if not sep:
            raise SchemaViolation(lineno, "expected token<TAB>id")
        try:
            token_id = int(idx)
        except ValueError:
            raise SchemaViolation(lineno, f"non-integer id {idx!r}") from None
        if token in token_to_id:
            raise SchemaViolation(lineno, f"duplicate token {token!r}")
        token_to_id[token] = token_id
    if BLANK_TOKEN not in token_to_id:
        raise SchemaViolation(0, f"missing mandatory {BLANK_TOKEN}\\t0 line")
    return Tokenizer(
        token_to_id=token_to_id,
        normalization=normalization or NormalizationRules(),
    )


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class RawCaption:
    """A crawled caption with noisy timestamps (seconds)."""

    text: str
    start: float
    end: float
    # end <= start is tolerated on input (noisy annotations) but flagged
    suspect: bool = False


@dataclass(frozen=True)
class LongFormRecording:
    recording_id: str
    declared_language: str  # canonical ISO-639-3
    posterior_path: Path
    captions: tuple[RawCaption, ...]


def _require(obj: dict, key: str, kind, lineno: int):
    if key not in obj:
        raise SchemaViolation(lineno, f"missing field {key!r}")
    value = obj[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise SchemaViolation(lineno, f"field {key!r} has type {type(value).__name__}")
    return value


def load_manifest(
    path: Path,
    languages: LanguageTable | None = None,
) -> list[LongFormRecording]:
    """Load a line-delimited recording manifest.

    Captions are returned sorted by start time; `posterior_path` is resolved
    relative to the manifest's directory. Errors name the offending line.
    """
    path = Path(path)
    table = languages or default_table()
    base = path.parent
    records: list[LongFormRecording] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise SchemaViolation(lineno, "record is not an object")
        recording_id = _require(obj, "recording_id", str, lineno)
        language = _require(obj, "language", str, lineno)
        posterior_path = _require(obj, "posterior_path", str, lineno)
        captions_raw = _require(obj, "captions", list, lineno)
        if recording_id in seen:
            raise DuplicateRecordingId(lineno, recording_id)
        seen[recording_id] = lineno
        if not table.is_known(language):
            raise UnknownLanguageCode(lineno, language)
        captions = []
        for item in captions_raw:
            if not isinstance(item, dict):
                raise SchemaViolation(lineno, "caption is not an object")
            text = _require(item, "text", str, lineno)
            start = _require(item, "start", float, lineno)
            end = _require(item, "end", float, lineno)
            if start < 0:
                raise SchemaViolation(lineno, f"caption start {start} < 0")
            captions.append(RawCaption(text=text, start=start, end=end, suspect=end <= start))
        captions.sort(key=lambda c: (c.start, c.end))
        records.append(
            LongFormRecording(
                recording_id=recording_id,
                declared_language=table.canonicalize(language),
                posterior_path=base / posterior_path,
                captions=tuple(captions),
            )
        )
    return records
