"""Compose keyframe captions into a title, an abstract, and an activity story.

Everything here is extractive and pure: the title is the best-scoring caption
(word-frequency scoring over a fixed stopword list), the abstract is the
deduplicated caption sequence in temporal order, and the story labels each
merged run of shots with its representative caption and duration. Same inputs
always produce byte-identical outputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from keycap.captioner import Caption, CaptionedKeyframe
from keycap.shots import Shot

DEFAULT_DUP_THRESHOLD = 0.6
DEFAULT_CONF_THRESHOLD = 0.5

TITLE_MAX_WORDS = 10

# Fixed 50-word stopword list; versioned so cached scores stay comparable
# across releases. Locale-independent by construction.
STOPWORDS_VERSION = "v1"
STOPWORDS = frozenset(
    """
    a an the and or but if then of at by for with about against between into
    through to from in on off over under again is are was were be been being
    am do does did it its this that these those as he she his her they them
    """.split()
)

_WORD_RE = re.compile(r"[a-z0-9]+")
_LEADING_ARTICLE_RE = re.compile(r"^(?:a|an|the)\s+", re.IGNORECASE)


def tokenize(text: str) -> frozenset[str]:
    """Lowercased, punctuation-stripped words minus the stopword list."""
    return frozenset(w for w in _WORD_RE.findall(text.lower()) if w not in STOPWORDS)


def caption_similarity(a: Caption, b: Caption) -> float:
    """Jaccard similarity of the captions' token sets; two captions with no
    content words count as identical."""
    ta, tb = tokenize(a.text), tokenize(b.text)
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def dedup_captions(
    captions: Sequence[Caption], threshold: float = DEFAULT_DUP_THRESHOLD
) -> list[Caption]:
    """Greedy scan over time-ordered captions keeping those whose similarity
    to every already-kept caption stays below ``threshold``."""
    kept: list[Caption] = []
    for caption in captions:
        if all(caption_similarity(caption, k) < threshold for k in kept):
            kept.append(caption)
    return kept


def _as_sentence(text: str) -> str:
    s = text.strip()
    s = s[:1].upper() + s[1:]
    if s and s[-1] not in ".!?":
        s += "."
    return s


def compose_abstract(captions: Sequence[Caption]) -> str:
    """Sentence-case each caption, terminate with a period, join in order."""
    if not captions:
        raise ValueError("compose_abstract requires at least one caption")
    return " ".join(_as_sentence(c.text) for c in captions)


def word_frequencies(captions: Sequence[Caption]) -> dict[str, int]:
    """Occurrence counts of non-stopword tokens across all captions."""
    freqs: dict[str, int] = {}
    for caption in captions:
        for word in _WORD_RE.findall(caption.text.lower()):
            if word not in STOPWORDS:
                freqs[word] = freqs.get(word, 0) + 1
    return freqs


def _caption_score(caption: Caption, freqs: Mapping[str, int]) -> float | None:
    words = [w for w in _WORD_RE.findall(caption.text.lower()) if w not in STOPWORDS]
    if not words:
        return None
    return sum(freqs[w] for w in words) / len(words)


def generate_title(captions: Sequence[Caption]) -> str:
    """Extractive title: the caption with the highest mean word-frequency
    score (ties go to the earliest), leading article stripped, truncated to
    10 words, first letter capitalized."""
    if not captions:
        raise ValueError("generate_title requires at least one caption")
    freqs = word_frequencies(captions)
    best: Caption | None = None
    best_score = float("-inf")
    for caption in captions:
        score = _caption_score(caption, freqs)
        if score is not None and score > best_score:
            best, best_score = caption, score
    if best is None:
        raise ValueError("generate_title requires a caption with non-stopword content")
    title = _LEADING_ARTICLE_RE.sub("", best.text.strip().rstrip(".!? "))
    title = " ".join(title.split()[:TITLE_MAX_WORDS])
    return title[:1].upper() + title[1:]


@dataclass(frozen=True)
class TimelineEntry:
    """One merged run of shots: its time span, label, and the keyframes the
    label came from."""

    start_s: float
    end_s: float
    text: str
    source_keyframes: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.start_s >= self.end_s:
            raise ValueError(f"timeline entry must have start < end, got {self}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class VideoDescription:
    """Final pipeline output: title, abstract, the captions they were built
    from, and the activity timeline."""

    title: str
    abstract: str
    captions: list[CaptionedKeyframe]
    timeline: list[TimelineEntry]


def needs_escalation(
    shot_captions: Sequence[Caption],
    attempts: int,
    threshold: float = DEFAULT_CONF_THRESHOLD,
) -> bool:
    """True when a shot's captions are all failed or all low-confidence, so
    another keyframe should be spent on it."""
    if attempts < 1:
        raise ValueError("needs_escalation requires at least one caption attempt")
    if not shot_captions:
        return True
    return max(c.effective_confidence for c in shot_captions) < threshold


def build_activity_story(
    captioned: Sequence[CaptionedKeyframe],
    shots: Sequence[Shot],
    frame_period_s: float,
    threshold: float = DEFAULT_DUP_THRESHOLD,
) -> list[TimelineEntry]:
    """Label each shot's span with its representative caption and merge
    consecutive near-duplicate labels into one entry.

    A shot spans [start frame time, end frame time + one frame period). The
    label is the caption of the shot's lowest-rank captioned keyframe; shots
    with no surviving caption inherit the previous shot's label (the next
    one's for a leading gap). A shot whose label's similarity to the current
    entry's caption reaches ``threshold`` merges into it, keeping the earliest
    caption and concatenating source keyframes. Entries are contiguous and
    tile [0, video duration].
    """
    if not captioned:
        raise ValueError("build_activity_story requires at least one captioned keyframe")

    by_shot: dict[int, CaptionedKeyframe] = {}
    for ck in captioned:
        cur = by_shot.get(ck.keyframe.shot_id)
        if cur is None or (ck.keyframe.rank, ck.keyframe.frame_index) < (
            cur.keyframe.rank,
            cur.keyframe.frame_index,
        ):
            by_shot[ck.keyframe.shot_id] = ck

    # Fill caption gaps by inheritance so every shot carries a label: carry
    # the previous shot's caption forward, and let a leading gap borrow the
    # first labeled shot's caption.
    raw: list[tuple[Caption | None, tuple[int, ...]]] = []
    carried: Caption | None = None
    for shot in shots:
        own = by_shot.get(shot.id)
        if own is not None:
            carried = own.caption
            raw.append((own.caption, (own.keyframe.frame_index,)))
        else:
            raw.append((carried, ()))
    first_caption = next(c for c, _ in raw if c is not None)
    labels = [(c if c is not None else first_caption, src) for c, src in raw]

    entries: list[TimelineEntry] = []
    entry_caption: Caption | None = None
    for shot, (caption, sources) in zip(shots, labels):
        start_s = shot.start * frame_period_s
        end_s = (shot.end + 1) * frame_period_s
        if entry_caption is not None and caption_similarity(entry_caption, caption) >= threshold:
            prev = entries[-1]
            entries[-1] = TimelineEntry(
                prev.start_s, end_s, prev.text, prev.source_keyframes + sources
            )
            continue
        entries.append(TimelineEntry(start_s, end_s, caption.text, sources))
        entry_caption = caption
    return entries


def render_story(entries: Sequence[TimelineEntry]) -> str:
    """Render ``From MM:SS to MM:SS: <text> (duration <s> s).`` lines.

    Timestamps and durations are rounded to whole seconds.
    """
    lines = []
    for entry in entries:
        start = int(round(entry.start_s))
        end = int(round(entry.end_s))
        duration = int(round(entry.duration_s))
        lines.append(
            "From %02d:%02d to %02d:%02d: %s (duration %d s).\n"
            % (start // 60, start % 60, end // 60, end % 60, entry.text, duration)
        )
    return "".join(lines)
