"""Pipeline configuration: key = value files and validation.

Relative paths in a config file are resolved against the file's directory,
so a corpus directory can be moved wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from cleanspeech.errors import ConfigError
from cleanspeech.synth import CorruptionSpec, SyntheticSpec


@dataclass
class PipelineConfig:
    input_manifest: Path
    tokenizer: Path
    audio_lid: Path
    text_lid_model: Path
    output_dir: Path
    theta_ctc: float = 0.10
    max_duration: float = 30.0
    confidence_window: int = 30
    nonspeech_floor: float = -10.0
    band_frames: int = 3750
    workers: int = 1

    def validate(self) -> None:
        for name in ("input_manifest", "tokenizer", "audio_lid", "text_lid_model", "output_dir"):
            if not str(getattr(self, name)):
                raise ConfigError(f"{name} must be a non-empty path")
        if not 0.0 <= self.theta_ctc <= 1.0:
            raise ConfigError(f"theta_ctc {self.theta_ctc} outside [0, 1]")
        if self.max_duration <= 0:
            raise ConfigError("max_duration must be positive")
        if self.confidence_window < 1:
            raise ConfigError("confidence_window must be >= 1")
        if self.band_frames < 1:
            raise ConfigError("band_frames must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _parse_kv(path: Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


_PATH_FIELDS = {"input_manifest", "tokenizer", "audio_lid", "text_lid_model", "output_dir"}


def load_config(path: Path) -> PipelineConfig:
    """Parse a pipeline config file and validate every field."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    pairs = _parse_kv(path)
    known = {f.name: f.type for f in fields(PipelineConfig)}
    unknown = sorted(set(pairs) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    missing = sorted(_PATH_FIELDS - set(pairs))
    if missing:
        raise ConfigError(f"{path}: missing required keys {', '.join(missing)}")

    base = path.parent
    kwargs: dict = {}
    for key, value in pairs.items():
        if key in _PATH_FIELDS:
            candidate = Path(value)
            kwargs[key] = candidate if candidate.is_absolute() else base / candidate
        elif key in ("confidence_window", "band_frames", "workers"):
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise ConfigError(f"{path}: {key} must be an integer, got {value!r}") from None
        else:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise ConfigError(f"{path}: {key} must be a number, got {value!r}") from None
    config = PipelineConfig(**kwargs)
    config.validate()
    return config


_SYNTH_KEYS = {
    "seed": int,
    "num_recordings": int,
    "captions_min": int,
    "captions_max": int,
    "vocab_size": int,
    "frames_per_token_min": int,
    "frames_per_token_max": int,
    "noise_temperature": float,
    "timestamp_shift_s": float,
    "misaligned_fraction": float,
    "wrong_label_fraction": float,
}


def load_synth_spec(path: Path) -> SyntheticSpec:
    """Parse a synthetic-corpus spec from the same key = value format."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"spec file not found: {path}")
    pairs = _parse_kv(path)
    unknown = sorted(set(pairs) - set(_SYNTH_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    parsed: dict = {}
    for key, value in pairs.items():
        try:
            parsed[key] = _SYNTH_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{path}: bad value for {key}: {value!r}") from None
    for required in ("seed", "num_recordings"):
        if required not in parsed:
            raise ConfigError(f"{path}: missing required key {required}")

    defaults = SyntheticSpec(seed=0, num_recordings=1)
    spec = SyntheticSpec(
        seed=parsed["seed"],
        num_recordings=parsed["num_recordings"],
        captions_per_recording=(
            parsed.get("captions_min", defaults.captions_per_recording[0]),
            parsed.get("captions_max", defaults.captions_per_recording[1]),
        ),
        vocab_size=parsed.get("vocab_size", defaults.vocab_size),
        frames_per_token=(
            parsed.get("frames_per_token_min", defaults.frames_per_token[0]),
            parsed.get("frames_per_token_max", defaults.frames_per_token[1]),
        ),
        noise_temperature=parsed.get("noise_temperature", 0.0),
        corruption=CorruptionSpec(
            timestamp_shift_s=parsed.get("timestamp_shift_s", 0.0),
            misaligned_fraction=parsed.get("misaligned_fraction", 0.0),
            wrong_label_fraction=parsed.get("wrong_label_fraction", 0.0),
        ),
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec
