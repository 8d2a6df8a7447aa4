"""Exception hierarchy shared across the pipeline.

ConfigError maps to exit code 2, DataError (and subclasses) to exit code 3;
anything else escaping the CLI is an internal error (exit 4).
"""

from __future__ import annotations


class CleanspeechError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CleanspeechError):
    """Invalid or incomplete pipeline configuration."""


class DataError(CleanspeechError):
    """A problem with input data; carries enough context to locate it."""


class MalformedHeader(DataError):
    """Posterior file has a bad magic, version, or impossible dimensions."""


class DimensionOverflow(DataError):
    """Posterior matrix exceeds the configured element budget."""


class UnnormalizedRow(DataError):
    """A posterior row is not a normalized log-probability distribution."""

    def __init__(self, row: int, logsumexp: float):
        self.row = row
        self.logsumexp = logsumexp
        super().__init__(f"row {row}: logsumexp {logsumexp:+.6g} outside tolerance")


class SchemaViolation(DataError):
    """A line-delimited record is missing a field or has the wrong type."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateRecordingId(DataError):
    def __init__(self, line: int, recording_id: str):
        self.line = line
        self.recording_id = recording_id
        super().__init__(f"line {line}: duplicate recording_id {recording_id!r}")


class UnknownLanguageCode(DataError):
    def __init__(self, line: int, code: str):
        self.line = line
        self.code = code
        super().__init__(f"line {line}: unknown language code {code!r}")


class DuplicateUtteranceId(DataError):
    def __init__(self, line: int, utterance_id: str):
        self.line = line
        self.utterance_id = utterance_id
        super().__init__(f"line {line}: duplicate utterance_id {utterance_id!r}")


class MissingAudioPrediction(DataError):
    """Utterances lack audio-LID predictions; lists every missing id."""

    def __init__(self, utterance_ids: list[str]):
        self.utterance_ids = utterance_ids
        shown = ", ".join(utterance_ids[:5])
        more = "" if len(utterance_ids) <= 5 else f" (+{len(utterance_ids) - 5} more)"
        super().__init__(f"no audio-LID prediction for: {shown}{more}")


class MissingThreshold(DataError):
    def __init__(self, language: str):
        self.language = language
        super().__init__(f"no confidence threshold computed for language {language!r}")


class InfeasibleLength(DataError):
    """Too few frames to emit the token sequence under CTC transition rules."""

    def __init__(self, num_frames: int, min_frames: int):
        self.num_frames = num_frames
        self.min_frames = min_frames
        super().__init__(f"{num_frames} frames < {min_frames} required by the token sequence")


class NoFeasiblePath(DataError):
    """Every terminal trellis cell is -inf; the text cannot be aligned."""


class EmptySegment(CleanspeechError):
    """Confidence was requested over an empty frame range."""


class SingleClassCorpus(DataError):
    """Text-LID training needs at least two distinct labels."""


class EmptyDocument(DataError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"training document {index} is empty")


class InstanceTooLarge(CleanspeechError):
    """Brute-force alignment guard: the instance is not enumerable."""
