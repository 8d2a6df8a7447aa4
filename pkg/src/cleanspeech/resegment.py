"""Pack aligned captions into utterances of bounded duration.

Packing happens at caption boundaries only (no mid-caption splitting), so the
text of an utterance is exactly the concatenation of its member captions.
Inter-caption silence inside an utterance counts toward its duration; silence
between utterances is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

from cleanspeech.ctc_align import CaptionAlignment, ConfidenceScore
from cleanspeech.posterior_io import LongFormRecording

MAX_DURATION_S = 30.0
NONSPEECH_FLOOR = -10.0  # log-prob; captions scoring below are treated as non-speech


@dataclass(frozen=True)
class AlignedUtterance:
    """A <=30 s segment with refined frame bounds and a confidence score."""

    utterance_id: str
    recording_id: str
    start_frame: int
    end_frame: int
    text: str
    language: str
    confidence: ConfidenceScore
    duration_s: float


@dataclass(frozen=True)
class OversizeCaption:
    """A single caption whose own span already exceeds the duration cap."""

    caption_index: int
    duration_s: float


def drop_nonspeech(
    captions: tuple[CaptionAlignment, ...] | list[CaptionAlignment],
    floor: float = NONSPEECH_FLOOR,
) -> tuple[list[CaptionAlignment], int]:
    """Remove captions carrying no alignable speech.

    A caption is non-speech when it tokenizes to nothing (annotation markup
    like "[Music]") or when its confidence sits below `floor`, meaning the
    audio does not support the text at all.
    """
    kept = [
        c
        for c in captions
        if not c.non_speech and c.confidence is not None and c.confidence.value >= floor
    ]
    return kept, len(captions) - len(kept)


def pack_utterances(
    recording: LongFormRecording,
    captions: list[CaptionAlignment],
    frame_shift: float,
    max_duration: float = MAX_DURATION_S,
) -> tuple[list[AlignedUtterance], list[OversizeCaption]]:
    """Greedy left-to-right packing of aligned captions.

    The current utterance absorbs the next caption iff the merged span (first
    caption's start to next caption's end) stays within `max_duration`;
    otherwise a new utterance starts. A lone caption that already exceeds the
    cap is reported as oversize, never emitted. Merged confidence is the min
    over member captions.
    """
    # compare in whole frames so the rule is exact under float timestamps
    max_frames = int(max_duration / frame_shift + 1e-9)
    utterances: list[AlignedUtterance] = []
    oversize: list[OversizeCaption] = []

    groups: list[list[CaptionAlignment]] = []
    current: list[CaptionAlignment] = []
    for cap in captions:
        span = cap.end_frame - cap.start_frame
        if span > max_frames:
            oversize.append(
                OversizeCaption(caption_index=cap.caption_index, duration_s=span * frame_shift)
            )
            if current:
                groups.append(current)
                current = []
            continue
        if current and cap.end_frame - current[0].start_frame > max_frames:
            groups.append(current)
            current = []
        current.append(cap)
    if current:
        groups.append(current)

    for index, group in enumerate(groups):
        start = group[0].start_frame
        end = group[-1].end_frame
        text = " ".join(recording.captions[c.caption_index].text.strip() for c in group)
        confidence = min((c.confidence for c in group), key=lambda s: s.value)
        utterances.append(
            AlignedUtterance(
                utterance_id=f"{recording.recording_id}-{index:05d}",
                recording_id=recording.recording_id,
                start_frame=start,
                end_frame=end,
                text=text,
                language=recording.declared_language,
                confidence=confidence,
                duration_s=(end - start) * frame_shift,
            )
        )
    return utterances, oversize
