#!/usr/bin/env python3
"""Embed a word list with WordLlama and write a GloVe-style text vector file.

Usage: export_phrase_vectors.py WORDS_FILE OUT_FILE

Multi-word entries are written with spaces replaced by underscores so each
record stays `token v1 ... vd`. Vectors are written unnormalized.
"""
import sys

from wordllama import WordLlama


def main() -> None:
    words_path, out_path = sys.argv[1], sys.argv[2]
    words = []
    seen = set()
    with open(words_path, encoding="utf-8") as f:
        for line in f:
            w = line.strip()
            if w and w not in seen:
                seen.add(w)
                words.append(w)
    wl = WordLlama.load()
    vectors = wl.embed(words, norm=False)
    with open(out_path, "w", encoding="utf-8") as out:
        for w, v in zip(words, vectors):
            out.write(w.replace(" ", "_"))
            for x in v:
                out.write(f" {float(x):.6g}")
            out.write("\n")


if __name__ == "__main__":
    main()
