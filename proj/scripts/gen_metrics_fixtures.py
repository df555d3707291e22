#!/usr/bin/env python3
"""Independent scoring oracle for the multilingual F1/EM fixtures.

Implements answer normalization and token F1 / exact match in plain Python on
top of unicodedata, computes expected scores for a fixture set spanning
en/es/de/ar/hi/vi/zh, and freezes them into tests/fixtures/metrics_fixtures.json.
The C++ implementation under include/xlaug/metrics.hpp is checked against this
file and must agree to 1e-9.
"""

import json
import sys
import unicodedata
from collections import Counter

ARTICLES = {
    "en": {"a", "an", "the"},
    "es": {"un", "una", "unos", "unas", "el", "la", "los", "las"},
    "de": {"ein", "eine", "einen", "einem", "eines", "einer",
           "der", "die", "das", "den", "dem", "des"},
    "vi": {"của", "là", "cái", "chiếc", "những"},
}

CJK_RANGES = [
    (0x3400, 0x4DBF), (0x4E00, 0x9FFF), (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF), (0x2A700, 0x2EBEF), (0x2F800, 0x2FA1F),
]


def is_cjk(cp):
    return any(a <= cp <= b for a, b in CJK_RANGES)


def lower_char(c):
    lo = c.lower()
    return lo if len(lo) == 1 else c


def normalize(text, lang):
    # 1. simple per-codepoint lowercase
    s = "".join(lower_char(c) for c in text)
    # 2. punctuation (category P*) -> space
    s = "".join(" " if unicodedata.category(c).startswith("P") else c for c in s)
    # 3. whitespace tokenization
    tokens = s.split()
    # 4. language-specific article handling
    if lang == "ar":
        stripped = []
        for t in tokens:
            if t.startswith("ال") and len(t) > 2:
                stripped.append(t[2:])
            else:
                stripped.append(t)
        tokens = stripped
    else:
        arts = ARTICLES.get(lang, set())
        tokens = [t for t in tokens if t not in arts]
    # 5. zh: every CJK character becomes its own token
    if lang == "zh":
        out = []
        for t in tokens:
            run = ""
            for c in t:
                if is_cjk(ord(c)):
                    if run:
                        out.append(run)
                        run = ""
                    out.append(c)
                else:
                    run += c
            if run:
                out.append(run)
        tokens = out
    return tokens


def f1_single(pred_tokens, gold_tokens):
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


def f1(pred, golds, lang):
    pt = normalize(pred, lang)
    return max(f1_single(pt, normalize(g, lang)) for g in golds)


def exact_match(pred, golds, lang):
    pt = normalize(pred, lang)
    return 1.0 if any(pt == normalize(g, lang) for g in golds) else 0.0


# (prediction, golds, language) triples. Hand-picked to cover lowercasing,
# punctuation stripping, article handling, Arabic prefix stripping, CJK
# character tokenization, multi-gold max, and empty/degenerate cases.
TRIPLES = [
    # --- en ---
    ("Broncos", ["Broncos"], "en"),
    ("the Broncos", ["Broncos"], "en"),
    ("Bronco", ["Broncos"], "en"),
    ("Denver Broncos", ["Broncos"], "en"),
    ("a quarterback", ["quarterback"], "en"),
    ("An Old Lady", ["old lady"], "en"),
    ("Peyton Manning", ["Peyton Manning", "Manning"], "en"),
    ("Manning", ["Peyton Manning", "Manning"], "en"),
    ("Super Bowl XXXIII", ["Super Bowl 50"], "en"),
    ("the the the", ["the"], "en"),
    ("38", ["38"], "en"),
    ("age 38", ["38"], "en"),
    ("John Elway, the quarterback", ["John Elway"], "en"),
    ("it's a trap", ["trap"], "en"),
    ("U.S. Army", ["US Army"], "en"),
    ("   ", ["nothing"], "en"),
    ("empty vs empty", [""], "en"),
    ("", [""], "en"),
    ("THE ANSWER", ["answer, the"], "en"),
    # --- es ---
    ("los Broncos", ["Broncos"], "es"),
    ("el mariscal de campo", ["mariscal de campo"], "es"),
    ("una victoria", ["la victoria"], "es"),
    ("Super Bowl XXXIII", ["la Super Bowl XXXIII"], "es"),
    ("José Ñíguez", ["jose ñiguez"], "es"),
    ("el récord anterior", ["récord anterior"], "es"),
    ("39 años", ["39"], "es"),
    ("equipos diferentes", ["dos equipos diferentes"], "es"),
    # --- de ---
    ("der Bundestag", ["Bundestag"], "de"),
    ("ein großes Haus", ["großes Haus"], "de"),
    ("Die Mannschaft", ["Mannschaft"], "de"),
    ("dem Spieler", ["den Spielern"], "de"),
    ("Fußball-Weltmeisterschaft", ["Fußball Weltmeisterschaft"], "de"),
    ("Angela Merkel", ["Merkel", "Angela Merkel"], "de"),
    # --- ar ---
    ("الولايات المتحدة", ["ولايات متحدة"], "ar"),
    ("القاهرة", ["قاهرة"], "ar"),
    ("محمد صلاح", ["محمد صلاح"], "ar"),
    ("في القاهرة الكبرى", ["القاهرة الكبرى"], "ar"),
    ("ال", ["ال"], "ar"),
    ("الال", ["ال"], "ar"),
    # --- hi ---
    ("जॉन एलवे", ["जॉन एलवे"], "hi"),
    ("नई दिल्ली।", ["नई दिल्ली"], "hi"),
    ("भारत की राजधानी", ["राजधानी"], "hi"),
    ("दिल्ली", ["मुंबई"], "hi"),
    # --- vi ---
    ("của Việt Nam", ["Việt Nam"], "vi"),
    ("những con mèo", ["con mèo"], "vi"),
    ("Hà Nội", ["Hà Nội."], "vi"),
    ("thành phố Hồ Chí Minh", ["Hồ Chí Minh"], "vi"),
    # --- zh ---
    ("野马队", ["野马"], "zh"),
    ("野马", ["野马队"], "zh"),
    ("野马队", ["野马队"], "zh"),
    ("约翰·埃尔维", ["约翰埃尔维"], "zh"),
    ("第33届超级碗", ["第 33 届超级碗"], "zh"),
    ("丹佛的橄榄球队", ["橄榄球队"], "zh"),
    ("四分卫", ["四分卫。"], "zh"),
    ("培顿·曼宁", ["培顿曼宁", "曼宁"], "zh"),
    ("mixed 超级碗 text", ["超级碗"], "zh"),
    ("一九九八年", ["1998年"], "zh"),
]


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/metrics_fixtures.json"
    rows = []
    for pred, golds, lang in TRIPLES:
        rows.append({
            "prediction": pred,
            "golds": golds,
            "lang": lang,
            "f1": f1(pred, golds, lang),
            "em": exact_match(pred, golds, lang),
            "pred_tokens": normalize(pred, lang),
        })
    with open(out, "w", encoding="utf-8") as f:
        json.dump({"fixtures": rows}, f, ensure_ascii=False, indent=1)
        f.write("\n")
    print("wrote %s with %d fixtures" % (out, len(rows)))
    assert len(rows) >= 50


if __name__ == "__main__":
    main()
