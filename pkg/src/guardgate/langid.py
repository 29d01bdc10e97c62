"""Character-trigram language identification (rank-order profile matching).

A profile is the list of the most frequent trigrams of a language, ranked.
A document is scored against each profile with the out-of-place measure:
the sum over its own top trigrams of how far each one's rank is from the
rank in the language profile, with a fixed penalty for trigrams the profile
lacks. The smallest distance wins.
"""

from __future__ import annotations

import re
from collections import Counter
from functools import lru_cache
from importlib import resources
from pathlib import Path

PROFILE_SIZE = 300
MIN_TEXT_LENGTH = 20
LANGUAGES = ("de", "en", "es", "fr")
UNDETERMINED = "und"

_WORD_RE = re.compile(r"[^\W\d_]+")


def normalize(text: str) -> str:
    """Lowercase and collapse whitespace runs."""
    return " ".join(text.lower().split())


def trigram_counts(text: str) -> Counter:
    counts: Counter = Counter()
    for word in _WORD_RE.findall(normalize(text)):
        padded = f"_{word}_"
        for i in range(len(padded) - 2):
            counts[padded[i:i + 3]] += 1
    return counts


def ranked_trigrams(text: str, size: int = PROFILE_SIZE) -> list[str]:
    counts = trigram_counts(text)
    return [g for g, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:size]]


def out_of_place(doc: list[str], profile: dict[str, int], penalty: int = PROFILE_SIZE) -> int:
    total = 0
    for rank, gram in enumerate(doc):
        other = profile.get(gram)
        total += penalty if other is None else abs(rank - other)
    return total


def write_profile(path: str | Path, ranked: list[str]) -> None:
    lines = [f"{gram}\t{rank}" for rank, gram in enumerate(ranked)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_profile(text: str) -> dict[str, int]:
    profile = {}
    for line in text.splitlines():
        if line.strip():
            gram, rank = line.split("\t")
            profile[gram] = int(rank)
    return profile


@lru_cache(maxsize=1)
def bundled_profiles() -> dict[str, dict[str, int]]:
    root = resources.files("guardgate") / "assets" / "langprofiles"
    return {lang: read_profile((root / f"{lang}.txt").read_text(encoding="utf-8"))
            for lang in LANGUAGES}


def detect_language(text: str, profiles: dict[str, dict[str, int]] | None = None) -> tuple[str, float]:
    """Best-matching ISO-639-1 code and a confidence in ``[0, 1]``.

    Confidence is the relative gap between the best and runner-up distances.
    Texts shorter than 20 characters give ``("und", 0.0)``.
    """
    if len(normalize(text)) < MIN_TEXT_LENGTH:
        return UNDETERMINED, 0.0
    profiles = bundled_profiles() if profiles is None else profiles
    doc = ranked_trigrams(text)
    if not doc:
        return UNDETERMINED, 0.0
    scored = sorted((out_of_place(doc, prof), lang) for lang, prof in profiles.items())
    best, lang = scored[0]
    if len(scored) == 1:
        return lang, 1.0
    runner_up = scored[1][0]
    return lang, (runner_up - best) / runner_up if runner_up else 0.0
