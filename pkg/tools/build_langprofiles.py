"""Rebuild the bundled trigram profiles from tools/corpus/*.txt.

    python tools/build_langprofiles.py

Checks each held-out sentence in tests/data/langid_heldout.tsv against the
new profiles and exits nonzero if any is misidentified.
"""

import sys
from pathlib import Path

from guardgate.langid import LANGUAGES, ranked_trigrams, read_profile, write_profile, detect_language

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "src" / "guardgate" / "assets" / "langprofiles"


def main():
    profiles = {}
    for lang in LANGUAGES:
        ranked = ranked_trigrams((ROOT / "tools" / "corpus" / f"{lang}.txt").read_text(encoding="utf-8"))
        write_profile(OUT / f"{lang}.txt", ranked)
        profiles[lang] = read_profile((OUT / f"{lang}.txt").read_text(encoding="utf-8"))
        print(f"{lang}: {len(ranked)} trigrams")
    misses = 0
    for line in (ROOT / "tests" / "data" / "langid_heldout.tsv").read_text(encoding="utf-8").splitlines():
        want, sentence = line.split("\t", 1)
        got, conf = detect_language(sentence, profiles)
        flag = "ok" if got == want else "MISS"
        misses += got != want
        print(f"{flag:4} {want} -> {got} ({conf:.2f})  {sentence[:50]}")
    sys.exit(1 if misses else 0)


if __name__ == "__main__":
    main()
