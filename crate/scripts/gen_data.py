#!/usr/bin/env python3
"""Regenerate the bundled lexicon and conversion tables.

Requires the `pypinyin` and `opencc-python-reimplemented` wheels to be
importable (pass their unpacked directories with --pypinyin / --opencc).
Readings that fall outside the syllable inventory (m, ng, hm, ê, ...) are
dropped.
"""
import argparse
import os
import sys
import unicodedata

INITIALS = "b c ch d f g h j k l m n p q r s sh t w x y z zh".split()
FINALS = set(
    "a ai an ang ao e ei en eng er i ia ian iang iao ie in ing iong iu o ong ou "
    "u ua uai uan uang ue ui un uo ü üe".split()
)
TONE_MARKS = {
    "̄": 1,  # macron
    "́": 2,  # acute
    "̌": 3,  # caron
    "̀": 4,  # grave
}


def to_numbered(marked):
    tone = 5
    out = []
    for ch in unicodedata.normalize("NFD", marked):
        if ch in TONE_MARKS:
            tone = TONE_MARKS[ch]
        elif ch == "̈":  # diaeresis, recombined below
            out.append(ch)
        else:
            out.append(ch)
    base = unicodedata.normalize("NFC", "".join(out)).replace("v", "ü")
    if base == "n":
        base = "en"
    return base, tone


def valid(base):
    for ini in sorted(INITIALS, key=len, reverse=True):
        if base.startswith(ini):
            return base[len(ini):] in FINALS
    return base in FINALS


def reading(marked):
    base, tone = to_numbered(marked)
    if not valid(base):
        return None
    return f"{base}{tone}"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pypinyin", required=True)
    ap.add_argument("--opencc", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    sys.path.insert(0, args.pypinyin)
    from pypinyin.pinyin_dict import pinyin_dict
    from pypinyin.phrases_dict import phrases_dict

    defaults = {}
    with open(os.path.join(args.out, "lexicon_chars.tsv"), "w", encoding="utf-8") as f:
        f.write("# Single-character readings, first reading is the default.\n")
        f.write("# Derived from pypinyin (MIT) which draws on Unihan readings.\n")
        for cp in sorted(pinyin_dict):
            readings = []
            for r in pinyin_dict[cp].split(","):
                r = reading(r)
                if r and r not in readings:
                    readings.append(r)
            if not readings:
                continue
            ch = chr(cp)
            defaults[ch] = readings[0]
            f.write(f"{ch}\t{','.join(readings)}\n")

    kept = 0
    with open(os.path.join(args.out, "lexicon_phrases.tsv"), "w", encoding="utf-8") as f:
        f.write("# Phrase readings that differ from the per-character defaults.\n")
        f.write("# Derived from pypinyin (MIT).\n")
        for phrase in sorted(phrases_dict):
            if not 2 <= len(phrase) <= 4 or any(c not in defaults for c in phrase):
                continue
            rows = phrases_dict[phrase]
            if len(rows) != len(phrase):
                continue
            syl = [reading(r[0]) for r in rows]
            if any(s is None for s in syl):
                continue
            if syl == [defaults[c] for c in phrase]:
                continue
            f.write(f"{phrase}\t{','.join(syl)}\n")
            kept += 1

    pairs = {}
    with open(os.path.join(args.opencc, "TSCharacters.txt"), encoding="utf-8") as src:
        for line in src:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                continue
            trad, simp = parts[0], parts[1].split(" ")[0]
            if len(trad) == 1 and len(simp) == 1 and trad != simp:
                pairs[trad] = simp
    with open(os.path.join(args.out, "t2s.tsv"), "w", encoding="utf-8") as f:
        f.write("# Traditional to simplified, one character per side.\n")
        f.write("# Derived from OpenCC TSCharacters (Apache-2.0).\n")
        for trad in sorted(pairs):
            f.write(f"{trad}\t{pairs[trad]}\n")
    print(f"chars={len(defaults)} phrases={kept} t2s={len(pairs)}", file=sys.stderr)


if __name__ == "__main__":
    main()
