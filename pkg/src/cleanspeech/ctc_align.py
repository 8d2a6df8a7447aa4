"""CTC segmentation: align token sequences against frame log-posteriors.

The dynamic program is a Viterbi search over the blank-interleaved label
sequence (self-loop, advance-by-1, advance-by-2; the skip is forbidden into
blanks and into repeated identical tokens). Unlike vanilla forced alignment,
the path may begin at any frame -- states 0 and 1 can be entered fresh at
every frame with zero penalty for the preceding audio -- and may end at any
frame. This is what lets captions with unreliable timestamps land anywhere
inside a long recording.

All arithmetic is in log-space; unreachable cells hold -inf, which propagates
safely through max/add (no NaN can arise). The trellis is float64 so that
path scores match an exact enumeration bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from cleanspeech.errors import EmptySegment, InfeasibleLength, NoFeasiblePath
from cleanspeech.posterior_io import FrameLogPosteriors, Tokenizer, tokenize
from cleanspeech.posterior_io import LongFormRecording

# backpointer codes; the predecessor state is s - code
BP_SELF = 0
BP_ADV1 = 1
BP_ADV2 = 2
BP_FRESH = 3  # path begins at this frame

TRELLIS_DUMP_MAGIC = b"CTCT"


class TokenInterval(NamedTuple):
    token_id: int
    start_frame: int
    end_frame: int  # exclusive


@dataclass(frozen=True)
class ConfidenceScore:
    """Min over sliding-window means of aligned per-frame log-probs."""

    value: float
    window_frames: int


@dataclass(frozen=True)
class AlignmentPath:
    """Best-path alignment of one token sequence over a posterior matrix.

    `per_frame_log_prob` holds the emission log-prob of the path's symbol at
    each covered frame and 0.0 outside [start_frame, end_frame); its sum
    equals `path_log_prob`.
    """

    token_intervals: tuple[TokenInterval, ...]
    path_log_prob: float
    per_frame_log_prob: np.ndarray
    start_frame: int
    end_frame: int  # exclusive
    band_limited: bool = False


def interleave_blanks(tokens: Sequence[int]) -> np.ndarray:
    """Label per trellis state: blank at even states, tokens at odd."""
    labels = np.zeros(2 * len(tokens) + 1, dtype=np.int64)
    labels[1::2] = tokens
    return labels


def min_feasible_frames(tokens: Sequence[int]) -> int:
    """Each token needs a frame; adjacent duplicates need a blank between."""
    dups = sum(1 for a, b in zip(tokens, tokens[1:]) if a == b)
    return len(tokens) + dups


@dataclass
class Trellis:
    """Filled Viterbi lattice over (frame, state) with per-frame state windows.

    Row t stores states [lo[t], lo[t] + width[t]); outside the window a state
    is implicitly -inf. Windows are monotone in t, which the shifted-window
    recurrence relies on.
    """

    values: np.ndarray  # (T, Wmax) float64
    backpointers: np.ndarray  # (T, Wmax) uint8
    lo: np.ndarray  # (T,) int64, window start state per frame
    width: np.ndarray  # (T,) int64
    labels: np.ndarray  # (S,) state -> token id (blank at even states)
    num_states: int
    posteriors: FrameLogPosteriors
    band: tuple[np.ndarray, np.ndarray] | None = None  # (band_lo, band_hi) pre-clip


def _window_bounds(
    num_frames: int, num_states: int, band: tuple[np.ndarray, np.ndarray] | None
) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(num_frames, dtype=np.int64)
    # a path starting in state <=1 advances at most 2 states per frame
    reach_hi = np.minimum(2 * t + 2, num_states)
    if band is None:
        lo = np.zeros(num_frames, dtype=np.int64)
        hi = reach_hi
    else:
        band_lo, band_hi = band
        lo = np.maximum.accumulate(np.clip(band_lo, 0, num_states))
        hi = np.minimum(np.maximum.accumulate(np.clip(band_hi, 0, num_states)), reach_hi)
    hi = np.maximum(hi, lo)  # empty windows allowed, never inverted
    return lo, hi


def _gather(prev: np.ndarray, offset: int, width: int) -> np.ndarray:
    """prev values at indices offset..offset+width-1, -inf outside."""
    out = np.full(width, -np.inf)
    src_lo = max(offset, 0)
    src_hi = min(offset + width, prev.shape[0])
    if src_lo < src_hi:
        out[src_lo - offset : src_hi - offset] = prev[src_lo:src_hi]
    return out


def build_trellis(
    posteriors: FrameLogPosteriors,
    tokens: Sequence[int],
    band: tuple[np.ndarray, np.ndarray] | None = None,
) -> Trellis:
    """Fill the max-log-prob lattice for `tokens` over `posteriors`.

    Args:
        posteriors: T x V frame log-probabilities, blank at column 0.
        tokens: non-empty sequence of non-blank token ids.
        band: optional per-frame state windows (lo, hi arrays of length T)
            restricting the search; used for long recordings where the full
            T x (2N+1) lattice would not fit in memory.

    Raises:
        InfeasibleLength: fewer frames than the CTC transition rules need.
    """
    if len(tokens) == 0:
        raise ValueError("tokens must be non-empty")
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.min() < 1 or tokens.max() >= posteriors.vocab_size:
        raise ValueError("token ids must lie in [1, vocab_size)")
    T = posteriors.num_frames
    need = min_feasible_frames(tokens.tolist())
    if T < need:
        raise InfeasibleLength(T, need)

    labels = interleave_blanks(tokens)
    S = labels.shape[0]
    # advance-by-2 lands only on token states whose token differs from the
    # previous one (blank is mandatory between repeated tokens)
    allow_skip = np.zeros(S, dtype=bool)
    if len(tokens) > 1:
        allow_skip[3::2] = tokens[1:] != tokens[:-1]

    lo, hi = _window_bounds(T, S, band)
    width = hi - lo
    wmax = int(width.max()) if T else 0
    values = np.full((T, wmax), -np.inf)
    backpointers = np.zeros((T, wmax), dtype=np.uint8)
    post = posteriors.values

    w0 = int(width[0])
    if w0:
        emit0 = post[0, labels[lo[0] : hi[0]]].astype(np.float64)
        row = np.full(w0, -np.inf)
        for s in (0, 1):
            j = s - int(lo[0])
            if 0 <= j < w0:
                row[j] = emit0[j]
                backpointers[0, j] = BP_FRESH
        values[0, :w0] = row

    for t in range(1, T):
        w = int(width[t])
        if w == 0:
            continue
        lo_t = int(lo[t])
        d = lo_t - int(lo[t - 1])
        prev = values[t - 1, : width[t - 1]]
        cand_self = _gather(prev, d, w)
        cand_adv1 = _gather(prev, d - 1, w)
        cand_adv2 = _gather(prev, d - 2, w)
        cand_adv2[~allow_skip[lo_t : lo_t + w]] = -np.inf

        # preference on ties: advance-by-2, advance-by-1, self-loop, fresh
        stacked = np.stack((cand_adv2, cand_adv1, cand_self))
        choice = np.argmax(stacked, axis=0)
        best = stacked[choice, np.arange(w)]
        codes = (2 - choice).astype(np.uint8)

        for s in (0, 1):
            j = s - lo_t
            if 0 <= j < w and 0.0 > best[j]:
                best[j] = 0.0
                codes[j] = BP_FRESH

        emit = post[t, labels[lo_t : lo_t + w]].astype(np.float64)
        values[t, :w] = best + emit
        backpointers[t, :w] = codes

    return Trellis(
        values=values,
        backpointers=backpointers,
        lo=lo,
        width=width,
        labels=labels,
        num_states=S,
        posteriors=posteriors,
        band=band,
    )


def _best_terminal(trellis: Trellis) -> tuple[float, int, int]:
    """Max-value terminal cell; ties prefer the latest frame, then the
    higher state (path completed earlier)."""
    S = trellis.num_states
    best = (-np.inf, -1, -1)
    for s in (S - 2, S - 1) if S >= 2 else (S - 1,):
        ok = (trellis.lo <= s) & (s < trellis.lo + trellis.width)
        if not ok.any():
            continue
        ts = np.nonzero(ok)[0]
        vals = trellis.values[ts, s - trellis.lo[ts]]
        top = vals.max()
        i = int(np.nonzero(vals == top)[0][-1])  # latest frame among equals
        cand = (float(top), int(ts[i]), s)
        if cand > best:
            best = cand
    return best


def backtrack(trellis: Trellis) -> AlignmentPath:
    """Recover the argmax path and its per-token frame intervals.

    Raises NoFeasiblePath when every terminal cell is -inf.
    """
    score, t_end, s_end = _best_terminal(trellis)
    if not np.isfinite(score):
        raise NoFeasiblePath("all terminal trellis cells are -inf")

    states: list[int] = []
    t, s = t_end, s_end
    while True:
        states.append(s)
        code = int(trellis.backpointers[t, s - int(trellis.lo[t])])
        if code == BP_FRESH:
            break
        s -= code
        t -= 1
    t_start = t
    states.reverse()

    post = trellis.posteriors.values
    labels = trellis.labels
    T = trellis.posteriors.num_frames
    per_frame = np.zeros(T, dtype=np.float64)
    covered = np.arange(t_start, t_end + 1)
    per_frame[covered] = post[covered, labels[np.asarray(states)]].astype(np.float64)

    intervals: list[TokenInterval] = []
    run_start = None
    prev_state = None
    for offset, state in enumerate(states):
        if state != prev_state:
            if prev_state is not None and prev_state % 2 == 1:
                intervals.append(
                    TokenInterval(int(labels[prev_state]), t_start + run_start, t_start + offset)
                )
            run_start = offset
            prev_state = state
    if prev_state is not None and prev_state % 2 == 1:
        intervals.append(
            TokenInterval(int(labels[prev_state]), t_start + run_start, t_start + len(states))
        )

    band_limited = False
    if trellis.band is not None:
        band_lo, band_hi = trellis.band
        for offset, state in enumerate(states):
            frame = t_start + offset
            if (state <= band_lo[frame] and band_lo[frame] > 0) or (
                state >= band_hi[frame] - 1 and band_hi[frame] < trellis.num_states
            ):
                band_limited = True
                break

    return AlignmentPath(
        token_intervals=tuple(intervals),
        path_log_prob=score,
        per_frame_log_prob=per_frame,
        start_frame=t_start,
        end_frame=t_end + 1,
        band_limited=band_limited,
    )


def segment_confidence(
    path: AlignmentPath, start_frame: int, end_frame: int, window_frames: int
) -> ConfidenceScore:
    """Score a frame range of an aligned path.

    The score is the minimum over all length-`window_frames` sliding windows
    of the mean per-frame log-prob, so one locally bad stretch cannot be
    averaged away; segments shorter than the window use their overall mean.
    Lower (more negative) means a worse audio-text match.
    """
    if window_frames < 1:
        raise ValueError("window_frames must be >= 1")
    if start_frame >= end_frame:
        raise EmptySegment(f"empty frame range [{start_frame}, {end_frame})")
    vals = path.per_frame_log_prob[start_frame:end_frame]
    if vals.shape[0] <= window_frames:
        score = float(np.mean(vals))
    else:
        kernel = np.ones(window_frames) / window_frames
        score = float(np.min(np.convolve(vals, kernel, mode="valid")))
    return ConfidenceScore(value=score, window_frames=window_frames)


# ---------------------------------------------------------------------------
# Long-form caption alignment


@dataclass(frozen=True)
class AlignConfig:
    confidence_window: int = 30  # frames; ~2.4 s at the 80 ms default shift
    band_frames: int = 3750  # +/- 5 min at 80 ms
    max_trellis_bytes: int = 512 * 2**20  # full DP above this goes banded


@dataclass(frozen=True)
class CaptionAlignment:
    """Refined bounds and confidence for one caption of a recording."""

    caption_index: int
    non_speech: bool
    start_frame: int = -1
    end_frame: int = -1
    confidence: ConfidenceScore | None = None
    token_intervals: tuple[TokenInterval, ...] = ()
    dropped_chars: int = 0


@dataclass(frozen=True)
class RecordingAlignment:
    recording_id: str
    captions: tuple[CaptionAlignment, ...]
    path: AlignmentPath | None
    band_limited: bool = False


def _caption_band(
    recording: LongFormRecording,
    caption_tokens: list[tuple[int, list[int]]],
    posteriors: FrameLogPosteriors,
    band_frames: int,
    num_states: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame state windows centered on interpolated caption timestamps.

    The raw timestamps are only trusted as coarse anchors: each caption's
    tokens are spread linearly over its claimed span, centers are forced
    monotone, and every state admits frames within +/- `band_frames`.
    """
    T = posteriors.num_frames
    shift = posteriors.frame_shift
    token_centers: list[float] = []
    for caption_index, tokens in caption_tokens:
        cap = recording.captions[caption_index]
        start_f = cap.start / shift
        end_f = max(cap.end, cap.start + shift) / shift
        n = len(tokens)
        for j in range(n):
            token_centers.append(start_f + (j + 0.5) * (end_f - start_f) / n)
    centers_tok = np.clip(np.maximum.accumulate(np.asarray(token_centers)), 0, T - 1)

    centers = np.empty(num_states, dtype=np.float64)
    centers[1::2] = centers_tok
    centers[0] = centers_tok[0]
    centers[2::2] = np.concatenate([(centers_tok[:-1] + centers_tok[1:]) / 2, centers_tok[-1:]])
    centers = np.maximum.accumulate(centers)

    t = np.arange(T, dtype=np.float64)
    lo = np.searchsorted(centers, t - band_frames, side="left")
    hi = np.searchsorted(centers, t + band_frames, side="right")
    return lo.astype(np.int64), hi.astype(np.int64)


def align_captions(
    recording: LongFormRecording,
    posteriors: FrameLogPosteriors,
    tokenizer: Tokenizer,
    config: AlignConfig = AlignConfig(),
) -> RecordingAlignment:
    """Jointly realign all captions of one recording.

    Caption token sequences are concatenated in recording order and aligned
    in a single dynamic program over the full posterior matrix, then the path
    is split back at caption boundaries; raw timestamps never constrain the
    search. Captions that tokenize to nothing are marked non-speech and get
    no interval.

    Raises InfeasibleLength / NoFeasiblePath for recordings whose text cannot
    fit their audio; callers route those to the rejection report.
    """
    tokenized: list[tuple[list[int], int]] = [
        tokenize(tokenizer, cap.text) for cap in recording.captions
    ]
    caption_tokens = [(i, ids) for i, (ids, _) in enumerate(tokenized) if ids]
    if not caption_tokens:
        captions = tuple(
            CaptionAlignment(caption_index=i, non_speech=True, dropped_chars=dropped)
            for i, (_, dropped) in enumerate(tokenized)
        )
        return RecordingAlignment(recording.recording_id, captions, path=None)

    flat_tokens: list[int] = []
    offsets: list[int] = []
    for _, ids in caption_tokens:
        offsets.append(len(flat_tokens))
        flat_tokens.extend(ids)

    num_states = 2 * len(flat_tokens) + 1
    band = None
    if posteriors.num_frames * num_states * 8 > config.max_trellis_bytes:
        band = _caption_band(
            recording, caption_tokens, posteriors, config.band_frames, num_states
        )
    trellis = build_trellis(posteriors, flat_tokens, band=band)
    path = backtrack(trellis)

    results: dict[int, CaptionAlignment] = {}
    for k, (caption_index, ids) in enumerate(caption_tokens):
        lo = offsets[k]
        hi = lo + len(ids)
        start = path.token_intervals[lo].start_frame
        end = path.token_intervals[hi - 1].end_frame
        confidence = segment_confidence(path, start, end, config.confidence_window)
        results[caption_index] = CaptionAlignment(
            caption_index=caption_index,
            non_speech=False,
            start_frame=start,
            end_frame=end,
            confidence=confidence,
            token_intervals=path.token_intervals[lo:hi],
            dropped_chars=tokenized[caption_index][1],
        )
    captions = tuple(
        results.get(
            i,
            CaptionAlignment(caption_index=i, non_speech=True, dropped_chars=tokenized[i][1]),
        )
        for i in range(len(recording.captions))
    )
    return RecordingAlignment(
        recording.recording_id, captions, path=path, band_limited=path.band_limited
    )


def dump_trellis(trellis: Trellis, path: Path) -> None:
    """Debug dump of the (possibly banded) lattice, magic ``CTCT``."""
    import struct

    values = np.ascontiguousarray(trellis.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIQQd",
                TRELLIS_DUMP_MAGIC,
                1,
                values.shape[0],
                values.shape[1],
                trellis.posteriors.frame_shift,
            )
        )
        fh.write(values.tobytes())
