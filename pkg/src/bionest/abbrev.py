"""Abbreviation (short form, long form) pair detection.

Implements the Schwartz & Hearst (2003) algorithm: a candidate short form
is a parenthesized token sequence of 2-10 characters, at most 2 words,
containing at least one letter, with an alphanumeric first character.  The
long form is searched in a window of min(|SF| + 5, |SF| * 2) words before
the parenthesis; short-form characters are matched right to left, each
consuming its rightmost unconsumed occurrence, and the first character
must match at the start of a word.

When the parenthesized text itself looks like a definition (more than two
words or more than ten characters) the orientation is reversed: the word
immediately before the parenthesis becomes the short-form candidate and
the parenthesized text the long-form window.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import Span

_MIN_SF_CHARS = 2
_MAX_SF_CHARS = 10
_MAX_SF_WORDS = 2

_WORD_RE = re.compile(r"\S+")
_LF_TOKEN_RE = re.compile(r"[^\s\-]+")


@dataclass(frozen=True)
class AbbreviationPair:
    short_form: str
    long_form: str
    short_span: Span
    long_span: Span
    # False for the reversed "SF (long form)" orientation.
    short_in_parens: bool = True


def _max_long_form_words(short_form: str) -> int:
    return min(len(short_form) + 5, len(short_form) * 2)


def _is_valid_short_form(candidate: str) -> bool:
    return (
        _MIN_SF_CHARS <= len(candidate) <= _MAX_SF_CHARS
        and len(candidate.split()) <= _MAX_SF_WORDS
        and any(ch.isalpha() for ch in candidate)
        and candidate[0].isalnum()
    )


def _top_level_parens(text: str):
    """Yield (open, close) index pairs of top-level parenthesized spans."""
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "(":
            if depth == 0:
                start = i
            depth += 1
        elif ch == ")" and depth > 0:
            depth -= 1
            if depth == 0:
                yield start, i


def _find_best_long_form(short_form: str, window: str) -> int | None:
    """Return the start offset of the long form within ``window``, or None.

    Right-to-left matching: each short-form character consumes its
    rightmost unconsumed occurrence; the first character must sit at the
    start of a word (preceded by a non-alphanumeric character or the
    window start).  The returned offset is snapped back to the preceding
    whitespace boundary.
    """
    s = len(short_form) - 1
    l = len(window) - 1
    while s >= 0:
        ch = short_form[s].lower()
        if not ch.isalnum():
            s -= 1
            continue
        while l >= 0 and (
            window[l].lower() != ch
            or (s == 0 and l > 0 and window[l - 1].isalnum())
        ):
            l -= 1
        if l < 0:
            return None
        s -= 1
        l -= 1
    return window.rfind(" ", 0, l + 1) + 1


def _acceptable_pair(short_form: str, long_form: str) -> bool:
    # Sanity guards from the reference algorithm: the definition must be
    # longer than the abbreviation, must not contain it as a whole word,
    # and must respect the word-count budget (alphanumeric SF characters).
    if len(long_form) < len(short_form):
        return False
    if (short_form + " ") in long_form or long_form.endswith(short_form):
        return False
    sf_size = sum(1 for ch in short_form if ch.isalnum())
    lf_words = len(_LF_TOKEN_RE.findall(long_form))
    if lf_words > min(sf_size + 5, sf_size * 2):
        return False
    return True


def _trimmed(text: str, start: int, end: int) -> tuple[str, int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return text[start:end], start, end


def _truncate_enumeration(content: str) -> str:
    # "(MPAP, n = 12)" defines only MPAP: cut at the first "; " or ", ".
    for sep in ("; ", ", "):
        idx = content.find(sep)
        if idx > -1:
            content = content[:idx]
    return content


def _match_forward(text: str, sf: str, sf_span: Span, open_idx: int) -> AbbreviationPair | None:
    words = list(_WORD_RE.finditer(text, 0, open_idx))
    if not words:
        return None
    window_words = words[-_max_long_form_words(sf):]
    window, win_start, win_end = _trimmed(text, window_words[0].start(), open_idx)
    offset = _find_best_long_form(sf, window)
    if offset is None:
        return None
    long_form = window[offset:]
    if not _acceptable_pair(sf, long_form):
        return None
    return AbbreviationPair(
        short_form=sf,
        long_form=long_form,
        short_span=sf_span,
        long_span=Span(win_start + offset, win_end),
        short_in_parens=True,
    )


def _match_reversed(text: str, content: str, content_start: int, open_idx: int) -> AbbreviationPair | None:
    words = list(_WORD_RE.finditer(text, 0, open_idx))
    if not words:
        return None
    sf_match = words[-1]
    sf = sf_match.group(0)
    if not _is_valid_short_form(sf):
        return None
    offset = _find_best_long_form(sf, content)
    if offset is None:
        return None
    long_form = content[offset:]
    if not _acceptable_pair(sf, long_form):
        return None
    return AbbreviationPair(
        short_form=sf,
        long_form=long_form,
        short_span=Span(sf_match.start(), sf_match.end()),
        long_span=Span(content_start + offset, content_start + len(content)),
        short_in_parens=False,
    )


def detect_abbreviations(text: str) -> list[AbbreviationPair]:
    """Detect all abbreviation definition pairs, left to right.

    Nested parentheses are not descended into; only top-level
    parenthesized spans are considered.
    """
    pairs: list[AbbreviationPair] = []
    for open_idx, close_idx in _top_level_parens(text):
        content, c_start, c_end = _trimmed(text, open_idx + 1, close_idx)
        if not content:
            continue
        truncated = _truncate_enumeration(content)
        truncated = truncated.rstrip()
        if _is_valid_short_form(truncated):
            pair = _match_forward(
                text, truncated, Span(c_start, c_start + len(truncated)), open_idx
            )
        elif len(content.split()) > _MAX_SF_WORDS or len(content) > _MAX_SF_CHARS:
            pair = _match_reversed(text, content, c_start, open_idx)
        else:
            pair = None
        if pair is not None:
            pairs.append(pair)
    return pairs
