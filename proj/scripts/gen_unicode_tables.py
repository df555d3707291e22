#!/usr/bin/env python3
"""Regenerates include/xlaug/unicode_tables.hpp from Python's unicodedata.

The C++ normalizer must classify punctuation/whitespace and lowercase
codepoints exactly like the fixture oracle (gen_metrics_fixtures.py), so both
draw from the same source: the tables below are frozen into the header and the
oracle uses unicodedata directly.
"""

import sys
import unicodedata

MAX_CP = 0x110000


def punct_ranges():
    ranges = []
    start = None
    for cp in range(MAX_CP):
        is_p = unicodedata.category(chr(cp)).startswith("P")
        if is_p and start is None:
            start = cp
        elif not is_p and start is not None:
            ranges.append((start, cp - 1))
            start = None
    if start is not None:
        ranges.append((start, MAX_CP - 1))
    return ranges


def whitespace_cps():
    return [cp for cp in range(MAX_CP) if chr(cp).isspace()]


def lowercase_pairs():
    pairs = []
    for cp in range(MAX_CP):
        lo = chr(cp).lower()
        if len(lo) == 1 and ord(lo) != cp:
            pairs.append((cp, ord(lo)))
    return pairs


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "include/xlaug/unicode_tables.hpp"
    pr = punct_ranges()
    ws = whitespace_cps()
    lc = lowercase_pairs()

    with open(out, "w", encoding="utf-8") as f:
        w = f.write
        w("// Generated by scripts/gen_unicode_tables.py (Python %s, Unicode %s).\n"
          % (".".join(map(str, sys.version_info[:3])), unicodedata.unidata_version))
        w("// Do not edit by hand; rerun the script instead.\n")
        w("#pragma once\n\n")
        w("#include <cstdint>\n#include <cstddef>\n\n")
        w("namespace xlaug::unicode::tables {\n\n")

        w("struct CpRange { char32_t first; char32_t last; };\n")
        w("struct CpPair { char32_t from; char32_t to; };\n\n")

        w("// Unicode general categories P* (punctuation), as closed ranges.\n")
        w("inline constexpr CpRange kPunctuation[] = {\n")
        for a, b in pr:
            w("    {0x%04X, 0x%04X},\n" % (a, b))
        w("};\n")
        w("inline constexpr std::size_t kPunctuationCount = %d;\n\n" % len(pr))

        w("// Codepoints Python's str.isspace() treats as whitespace.\n")
        w("inline constexpr char32_t kWhitespace[] = {\n    ")
        w(", ".join("0x%04X" % c for c in ws))
        w("\n};\n")
        w("inline constexpr std::size_t kWhitespaceCount = %d;\n\n" % len(ws))

        w("// Simple (1:1) lowercase mappings where lower(cp) != cp, sorted by cp.\n")
        w("inline constexpr CpPair kLowercase[] = {\n")
        for i in range(0, len(lc), 6):
            row = lc[i:i + 6]
            w("    " + " ".join("{0x%04X, 0x%04X}," % (a, b) for a, b in row) + "\n")
        w("};\n")
        w("inline constexpr std::size_t kLowercaseCount = %d;\n\n" % len(lc))

        w("}  // namespace xlaug::unicode::tables\n")
    print("wrote %s: %d punct ranges, %d whitespace cps, %d lowercase pairs"
          % (out, len(pr), len(ws), len(lc)))


if __name__ == "__main__":
    main()
