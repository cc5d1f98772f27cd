"""Rule-based speech emphasis: span annotation and SSML-style rendering.

Spot names, person names and questions are emphasized at three levels so a
synthesizer can raise volume, slow down and pause around words that are easy
to mishear. Spot names additionally carry a phonetic reading because kanji
names are routinely mispronounced; "｜" in a reading marks a word break.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .catalog import Spot
from .config import DATA_DIR

SPOT_NAME = "spot_name"
PERSON_NAME = "person_name"
QUESTION = "question"

SENTENCE_TERMINATORS = "。．.！!？?\n"

# Closed list of interrogative sentence endings, checked when the sentence
# carries no explicit question mark. Deliberately excludes bare か, which would
# misfire on na-adjectives such as 静か.
INTERROGATIVE_SUFFIXES = ("ですか", "ますか", "でしょうか", "のか", "かな", "かしら")


@dataclass(frozen=True)
class LevelProsody:
    volume_delta: float
    rate_factor: float
    pause_before_ms: int
    pause_after_ms: int


@dataclass
class EmphasisProfile:
    levels: dict[int, LevelProsody]
    category_levels: dict[str, int] = field(
        default_factory=lambda: {SPOT_NAME: 3, PERSON_NAME: 2, QUESTION: 1}
    )

    def for_level(self, level: int) -> LevelProsody:
        return self.levels[level]

    def level_of(self, category: str) -> int:
        return self.category_levels[category]


def load_person_lexicon(path: str | Path | None = None) -> list[str]:
    return json.loads(Path(path or DATA_DIR / "person_names.json").read_text(encoding="utf-8"))


def load_profile(path: str | Path | None = None) -> EmphasisProfile:
    raw = json.loads(Path(path or DATA_DIR / "emphasis_profile.json").read_text(encoding="utf-8"))
    levels = {int(k): LevelProsody(**v) for k, v in raw["levels"].items()}
    return EmphasisProfile(levels=levels, category_levels=dict(raw["category_levels"]))


_default_profile: EmphasisProfile | None = None


def default_profile() -> EmphasisProfile:
    global _default_profile
    if _default_profile is None:
        _default_profile = load_profile()
    return _default_profile


@dataclass
class EmphasisSpan:
    start: int
    end: int
    level: int
    category: str
    volume_delta: float
    rate_factor: float
    pause_before_ms: int
    pause_after_ms: int
    phonetic: str | None = None  # present iff category == spot_name

    def length(self) -> int:
        return self.end - self.start


@dataclass
class SpeechMarkup:
    plain_text: str
    spans: list[EmphasisSpan]


def annotate(
    utterance: str,
    known_spots: list[Spot],
    person_lexicon: list[str],
    profile: EmphasisProfile | None = None,
) -> SpeechMarkup:
    """Mark up spot names, person names and interrogative sentences.

    Overlaps resolve by longer-match-first, then spot over person; question
    spans are trimmed around whatever survives so spans never overlap.
    """
    profile = profile or default_profile()
    if not utterance:
        return SpeechMarkup(plain_text=utterance, spans=[])

    word_matches: list[tuple[int, int, str, str | None]] = []
    for spot in known_spots:
        for start in _occurrences(utterance, spot.name):
            word_matches.append((start, start + len(spot.name), SPOT_NAME, spot.reading))
    for name in person_lexicon:
        for start in _occurrences(utterance, name):
            word_matches.append((start, start + len(name), PERSON_NAME, None))

    # Longest match wins; spot beats person on equal length.
    priority = {SPOT_NAME: 0, PERSON_NAME: 1}
    word_matches.sort(key=lambda m: (-(m[1] - m[0]), priority[m[2]], m[0]))
    kept: list[tuple[int, int, str, str | None]] = []
    for match in word_matches:
        if not any(_overlaps(match[0], match[1], k[0], k[1]) for k in kept):
            kept.append(match)

    pieces: list[tuple[int, int, str, str | None]] = list(kept)
    for start, end in _question_sentences(utterance):
        for seg_start, seg_end in _subtract(start, end, kept):
            pieces.append((seg_start, seg_end, QUESTION, None))

    pieces.sort(key=lambda m: m[0])
    spans = []
    for start, end, category, phonetic in pieces:
        level = profile.level_of(category)
        prosody = profile.for_level(level)
        spans.append(EmphasisSpan(
            start=start,
            end=end,
            level=level,
            category=category,
            volume_delta=prosody.volume_delta,
            rate_factor=prosody.rate_factor,
            pause_before_ms=prosody.pause_before_ms,
            pause_after_ms=prosody.pause_after_ms,
            phonetic=phonetic,
        ))
    return SpeechMarkup(plain_text=utterance, spans=spans)


def render(markup: SpeechMarkup, profile: EmphasisProfile | None = None) -> str:
    """Emit an SSML-compatible document; stripping its tags yields plain_text."""
    profile = profile or default_profile()
    parts = ["<speak>"]
    cursor = 0
    for span in markup.spans:
        parts.append(escape(markup.plain_text[cursor:span.start]))
        prosody = profile.for_level(span.level)
        if prosody.pause_before_ms > 0:
            parts.append(f'<break time="{prosody.pause_before_ms}ms"/>')
        parts.append(
            f'<prosody volume={quoteattr(_volume(prosody.volume_delta))} '
            f'rate={quoteattr(_rate(prosody.rate_factor))}>'
        )
        body = escape(markup.plain_text[span.start:span.end])
        if span.phonetic is not None:
            alias = span.phonetic.replace("｜", " ")
            parts.append(f"<sub alias={quoteattr(alias)}>{body}</sub>")
        else:
            parts.append(body)
        parts.append("</prosody>")
        if prosody.pause_after_ms > 0:
            parts.append(f'<break time="{prosody.pause_after_ms}ms"/>')
        cursor = span.end
    parts.append(escape(markup.plain_text[cursor:]))
    parts.append("</speak>")
    return "".join(parts)


def _volume(delta: float) -> str:
    return f"+{delta:g}dB" if delta >= 0 else f"{delta:g}dB"


def _rate(factor: float) -> str:
    return f"{round(factor * 100)}%"


def _occurrences(text: str, needle: str) -> list[int]:
    if not needle:
        return []
    starts = []
    pos = text.find(needle)
    while pos != -1:
        starts.append(pos)
        pos = text.find(needle, pos + 1)
    return starts


def _overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


def _subtract(start: int, end: int, blockers: list[tuple[int, int, str, str | None]]) -> list[tuple[int, int]]:
    """Segments of [start, end) not covered by any blocker interval."""
    cuts = sorted((b[0], b[1]) for b in blockers if _overlaps(start, end, b[0], b[1]))
    segments = []
    cursor = start
    for b_start, b_end in cuts:
        if b_start > cursor:
            segments.append((cursor, min(b_start, end)))
        cursor = max(cursor, b_end)
    if cursor < end:
        segments.append((cursor, end))
    return [(s, e) for s, e in segments if e > s]


def _question_sentences(text: str) -> list[tuple[int, int]]:
    """[start, end) of every interrogative sentence, terminators included."""
    sentences = []
    i = 0
    n = len(text)
    while i < n:
        core_start = i
        while i < n and text[i] not in SENTENCE_TERMINATORS:
            i += 1
        core_end = i
        while i < n and text[i] in SENTENCE_TERMINATORS:
            i += 1
        sentences.append((core_start, core_end, i))

    spans = []
    for core_start, core_end, term_end in sentences:
        # skip leading whitespace so spans hug the sentence
        start = core_start
        while start < core_end and text[start].isspace():
            start += 1
        if start >= core_end:
            continue
        terminators = text[core_end:term_end]
        core = text[start:core_end].rstrip()
        if not core:
            continue
        is_question = "？" in terminators or "?" in terminators or core.endswith(INTERROGATIVE_SUFFIXES)
        if is_question:
            end = term_end
            while end > core_end and text[end - 1] == "\n":
                end -= 1
            if end == core_end:
                end = start + len(core)
            spans.append((start, end))
    return spans
