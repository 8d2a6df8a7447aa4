"""Synthetic corpora with known ground truth, plus a brute-force aligner.

The generator emits a complete pipeline input set (posteriors, manifest,
tokenizer, audio-LID predictions, text-LID training corpus) built from
temperature-scaled one-hot posteriors around known token positions, with
controllable corruptions: a constant timestamp shift, caption texts rotated
within a recording (audio-text misalignment), and wrong language labels.

`brute_force_align` enumerates every legal path for small instances; it is
the independent oracle the dynamic program is checked against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cleanspeech.ctc_align import (
    AlignConfig,
    AlignmentPath,
    TokenInterval,
    align_captions,
    interleave_blanks,
    min_feasible_frames,
)
from cleanspeech.errors import InfeasibleLength, InstanceTooLarge, NoFeasiblePath
from cleanspeech.posterior_io import (
    BLANK_TOKEN,
    DEFAULT_FRAME_SHIFT,
    FrameLogPosteriors,
    LongFormRecording,
    RawCaption,
    Tokenizer,
    write_posteriors,
    write_tokenizer,
)
from cleanspeech.resegment import drop_nonspeech, pack_utterances

BRUTE_FORCE_MAX_FRAMES = 10
BRUTE_FORCE_MAX_TOKENS = 4

_LANGS = ("eng", "rus")
_ALPHABETS = ("abcdefghijklmnopqrstuvwxyz", "абвгдежзийклмнопрстуфхцчшщэюя")


@dataclass(frozen=True)
class CorruptionSpec:
    timestamp_shift_s: float = 0.0
    misaligned_fraction: float = 0.0
    wrong_label_fraction: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    num_recordings: int
    captions_per_recording: tuple[int, int] = (2, 4)
    vocab_size: int = 21
    frames_per_token: tuple[int, int] = (4, 9)
    noise_temperature: float = 0.0
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)

    def validate(self) -> None:
        c = self.corruption
        for name, frac in (
            ("misaligned_fraction", c.misaligned_fraction),
            ("wrong_label_fraction", c.wrong_label_fraction),
        ):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.num_recordings < 1:
            raise ValueError("num_recordings must be >= 1")
        if self.vocab_size < 5:
            raise ValueError("vocab_size must be >= 5 (blank + two chars per language)")
        if self.captions_per_recording[0] < 1 or (
            self.captions_per_recording[0] > self.captions_per_recording[1]
        ):
            raise ValueError("bad captions_per_recording range")
        if c.misaligned_fraction > 0 and self.captions_per_recording[0] < 2:
            raise ValueError("misalignment by rotation needs >= 2 captions per recording")
        if self.frames_per_token[0] < 1 or self.frames_per_token[0] > self.frames_per_token[1]:
            raise ValueError("bad frames_per_token range")
        if self.noise_temperature < 0:
            raise ValueError("noise_temperature must be >= 0")


@dataclass(frozen=True)
class TrueCaption:
    text: str  # the text actually spoken in this audio region
    start_frame: int
    end_frame: int
    token_ids: tuple[int, ...]


@dataclass(frozen=True)
class TrueRecording:
    recording_id: str
    true_language: str
    declared_language: str
    wrong_label: bool
    misaligned: bool
    captions: tuple[TrueCaption, ...]


@dataclass(frozen=True)
class SyntheticCorpus:
    manifest: Path
    tokenizer: Path
    audio_lid: Path
    lid_corpus: Path
    ground_truth: Path
    recordings: tuple[TrueRecording, ...]


def _log_softened_onehot(symbols: np.ndarray, vocab_size: int, temperature: float) -> np.ndarray:
    """Rows are softmax(one_hot / temperature); temperature 0 is exact one-hot."""
    T = symbols.shape[0]
    if temperature == 0.0:
        values = np.full((T, vocab_size), -np.inf, dtype=np.float64)
        values[np.arange(T), symbols] = 0.0
        return values.astype(np.float32)
    z = math.exp(1.0 / temperature)
    log_true = math.log(z) - math.log(z + vocab_size - 1)
    log_other = -math.log(z + vocab_size - 1)
    values = np.full((T, vocab_size), log_other, dtype=np.float64)
    values[np.arange(T), symbols] = log_true
    return values.astype(np.float32)


def _alphabets(vocab_size: int) -> tuple[dict[str, list[str]], dict[str, int]]:
    n_chars = vocab_size - 1
    split = (n_chars + 1) // 2
    chars = {
        _LANGS[0]: list(_ALPHABETS[0][:split]),
        _LANGS[1]: list(_ALPHABETS[1][: n_chars - split]),
    }
    token_to_id = {BLANK_TOKEN: 0}
    for lang in _LANGS:
        for ch in chars[lang]:
            token_to_id[ch] = len(token_to_id)
    return chars, token_to_id


def _random_text(rng: np.random.Generator, alphabet: list[str], words: int) -> str:
    parts = []
    for _ in range(words):
        length = int(rng.integers(2, 6))
        parts.append("".join(rng.choice(alphabet) for _ in range(length)))
    return " ".join(parts)


def generate_corpus(
    spec: SyntheticSpec,
    out_dir: Path,
    max_duration: float = 30.0,
    confidence_window: int = 30,
    nonspeech_floor: float = -10.0,
) -> SyntheticCorpus:
    """Emit a complete, deterministic pipeline input set under `out_dir`.

    Audio-LID predictions are keyed by the utterance ids stage 1 will
    produce, so the generator packs utterances itself with the same knobs the
    pipeline will run with; the predicted language is always the ground-truth
    audio language with probability 1.0.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    out_dir = Path(out_dir)
    (out_dir / "posteriors").mkdir(parents=True, exist_ok=True)

    chars, token_to_id = _alphabets(spec.vocab_size)
    tokenizer = Tokenizer(token_to_id=token_to_id)
    tokenizer_path = out_dir / "tokenizer.tsv"
    write_tokenizer(tokenizer_path, tokenizer)

    n = spec.num_recordings
    wrong_label_ids = set(
        rng.choice(n, size=int(round(spec.corruption.wrong_label_fraction * n)), replace=False)
        .tolist()
    )
    misaligned_ids = set(
        rng.choice(n, size=int(round(spec.corruption.misaligned_fraction * n)), replace=False)
        .tolist()
    )

    shift = DEFAULT_FRAME_SHIFT
    manifest_lines: list[str] = []
    audio_lid_lines: list[str] = []
    truth_lines: list[str] = []
    recordings: list[TrueRecording] = []

    for r in range(n):
        recording_id = f"synth{r:04d}"
        true_language = _LANGS[r % 2]
        alphabet = chars[true_language]
        cap_lo, cap_hi = spec.captions_per_recording
        num_captions = int(rng.integers(cap_lo, cap_hi + 1))

        texts = [_random_text(rng, alphabet, int(rng.integers(2, 5))) for _ in range(num_captions)]
        symbols: list[int] = [0] * int(rng.integers(3, 9))  # leading silence
        true_caps: list[TrueCaption] = []
        frames_lo, frames_hi = spec.frames_per_token
        for text in texts:
            ids = [token_to_id[ch] for ch in text if ch != " "]
            first_start = None
            prev = None
            for tok in ids:
                gap = int(rng.integers(0, 2))
                if tok == prev:
                    gap = max(gap, 1)  # repeated tokens need a blank frame
                symbols.extend([0] * gap)
                if first_start is None:
                    first_start = len(symbols)
                symbols.extend([tok] * int(rng.integers(frames_lo, frames_hi + 1)))
                prev = tok
            true_caps.append(
                TrueCaption(
                    text=text,
                    start_frame=first_start,
                    end_frame=len(symbols),
                    token_ids=tuple(ids),
                )
            )
            symbols.extend([0] * int(rng.integers(4, 11)))  # inter-caption silence
        symbols.extend([0] * int(rng.integers(3, 9)))

        symbol_arr = np.asarray(symbols, dtype=np.int64)
        posteriors = FrameLogPosteriors(
            values=_log_softened_onehot(symbol_arr, spec.vocab_size, spec.noise_temperature),
            frame_shift=shift,
        )
        posterior_rel = f"posteriors/{recording_id}.ctcp"
        write_posteriors(out_dir / posterior_rel, posteriors)

        wrong_label = r in wrong_label_ids
        misaligned = r in misaligned_ids and num_captions >= 2
        declared = _LANGS[(r + 1) % 2] if wrong_label else true_language
        manifest_texts = texts[1:] + texts[:1] if misaligned else texts

        captions_json = []
        raw_captions = []
        for cap, text in zip(true_caps, manifest_texts):
            start_s = max(0.0, cap.start_frame * shift + spec.corruption.timestamp_shift_s)
            end_s = max(start_s + shift, cap.end_frame * shift + spec.corruption.timestamp_shift_s)
            captions_json.append({"text": text, "start": start_s, "end": end_s})
            raw_captions.append(RawCaption(text=text, start=start_s, end=end_s))
        manifest_lines.append(
            json.dumps(
                {
                    "recording_id": recording_id,
                    "language": declared,
                    "posterior_path": posterior_rel,
                    "captions": captions_json,
                },
                ensure_ascii=False,
            )
        )

        truth = TrueRecording(
            recording_id=recording_id,
            true_language=true_language,
            declared_language=declared,
            wrong_label=wrong_label,
            misaligned=misaligned,
            captions=tuple(true_caps),
        )
        recordings.append(truth)
        truth_lines.append(
            json.dumps(
                {
                    "recording_id": recording_id,
                    "true_language": true_language,
                    "declared_language": declared,
                    "wrong_label": wrong_label,
                    "misaligned": misaligned,
                    "captions": [
                        {
                            "text": c.text,
                            "start_frame": c.start_frame,
                            "end_frame": c.end_frame,
                        }
                        for c in true_caps
                    ],
                },
                ensure_ascii=False,
            )
        )

        # key audio-LID predictions by the utterance ids stage 1 will emit
        record = LongFormRecording(
            recording_id=recording_id,
            declared_language=declared,
            posterior_path=out_dir / posterior_rel,
            captions=tuple(raw_captions),
        )
        try:
            alignment = align_captions(
                record, posteriors, tokenizer, AlignConfig(confidence_window=confidence_window)
            )
        except (InfeasibleLength, NoFeasiblePath):
            continue
        kept, _ = drop_nonspeech(alignment.captions, floor=nonspeech_floor)
        utterances, _ = pack_utterances(record, kept, shift, max_duration=max_duration)
        for utt in utterances:
            audio_lid_lines.append(
                json.dumps(
                    {"utterance_id": utt.utterance_id, "language": true_language, "prob": 1.0}
                )
            )

    lid_lines = []
    for lang in _LANGS:
        for _ in range(120):
            lid_lines.append(f"{lang}\t{_random_text(rng, chars[lang], int(rng.integers(6, 12)))}")

    manifest_path = out_dir / "manifest.jsonl"
    audio_lid_path = out_dir / "audio_lid.jsonl"
    lid_corpus_path = out_dir / "lid_corpus.tsv"
    truth_path = out_dir / "ground_truth.jsonl"
    manifest_path.write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    audio_lid_path.write_text("\n".join(audio_lid_lines) + "\n", encoding="utf-8")
    lid_corpus_path.write_text("\n".join(lid_lines) + "\n", encoding="utf-8")
    truth_path.write_text("\n".join(truth_lines) + "\n", encoding="utf-8")

    return SyntheticCorpus(
        manifest=manifest_path,
        tokenizer=tokenizer_path,
        audio_lid=audio_lid_path,
        lid_corpus=lid_corpus_path,
        ground_truth=truth_path,
        recordings=tuple(recordings),
    )


# ---------------------------------------------------------------------------
# Brute-force oracle


def brute_force_align(posteriors: FrameLogPosteriors, tokens: list[int]) -> AlignmentPath:
    """Exhaustively enumerate every legal path and return the argmax.

    Shares the dynamic program's contract, including its tie-breaks: highest
    score, then latest end frame, then highest end state, then -- walking
    backward from the end -- the smallest predecessor state, with a longer
    backward extension beating a fresh start. Guard-railed to tiny instances.
    """
    T = posteriors.num_frames
    if T > BRUTE_FORCE_MAX_FRAMES or len(tokens) > BRUTE_FORCE_MAX_TOKENS:
        raise InstanceTooLarge(
            f"{T} frames x {len(tokens)} tokens exceeds the enumeration guard"
        )
    if not tokens:
        raise ValueError("tokens must be non-empty")
    need = min_feasible_frames(tokens)
    if T < need:
        raise InfeasibleLength(T, need)

    labels = interleave_blanks(tokens)
    S = labels.shape[0]
    allow_skip = [
        s % 2 == 1 and s >= 3 and tokens[s // 2] != tokens[s // 2 - 1] for s in range(S)
    ]
    post = posteriors.values.astype(np.float64)

    best: tuple[float, int, int, tuple[int, ...]] | None = None

    def consider(score: float, t_end: int, states: tuple[int, ...]) -> None:
        nonlocal best
        cand = (score, t_end, states[-1], states)
        if best is None or _path_better(cand, best):
            best = cand

    def dfs(t: int, s: int, score: float, states: list[int]) -> None:
        if s >= S - 2:
            consider(score, t, tuple(states))
        if t + 1 >= T:
            return
        for s_next in (s, s + 1, s + 2):
            if s_next >= S:
                continue
            if s_next == s + 2 and not allow_skip[s_next]:
                continue
            states.append(s_next)
            dfs(t + 1, s_next, score + post[t + 1, labels[s_next]], states)
            states.pop()

    for t0 in range(T):
        for s0 in (0, 1):
            if s0 < S:
                dfs(t0, s0, float(post[t0, labels[s0]]), [s0])

    if best is None or not np.isfinite(best[0]):
        raise NoFeasiblePath("no finite-score path exists")

    score, t_end, _, states = best
    t_start = t_end - len(states) + 1
    per_frame = np.zeros(T, dtype=np.float64)
    intervals: list[TokenInterval] = []
    run_start = None
    prev_state = None
    for offset, state in enumerate(states):
        frame = t_start + offset
        per_frame[frame] = post[frame, labels[state]]
        if state != prev_state:
            if prev_state is not None and prev_state % 2 == 1:
                intervals.append(
                    TokenInterval(int(labels[prev_state]), t_start + run_start, frame)
                )
            run_start = offset
            prev_state = state
    if prev_state is not None and prev_state % 2 == 1:
        intervals.append(
            TokenInterval(int(labels[prev_state]), t_start + run_start, t_end + 1)
        )

    return AlignmentPath(
        token_intervals=tuple(intervals),
        path_log_prob=score,
        per_frame_log_prob=per_frame,
        start_frame=t_start,
        end_frame=t_end + 1,
    )


def _path_better(a: tuple, b: tuple) -> bool:
    """Total order on candidate paths matching the trellis backtrack."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    if a[2] != b[2]:
        return a[2] > b[2]
    sa, sb = a[3], b[3]
    for i in range(1, max(len(sa), len(sb))):
        va = sa[len(sa) - 1 - i] if i < len(sa) else None
        vb = sb[len(sb) - 1 - i] if i < len(sb) else None
        if va == vb:
            continue
        if va is None:  # a freshly started; b extends further back and wins
            return False
        if vb is None:
            return True
        return va < vb
    return False
