#!/usr/bin/env python3
"""Freeze GPT-2 BPE golden ids for the Rust tokenizer tests.

The encoder below is OpenAI's published gpt-2 `encoder.py` algorithm, kept
verbatim in structure. When `transformers` is importable, every string is
also cross-checked against its slow GPT2Tokenizer.

Usage: python3 tools/gen_bpe_golden.py crates/core/tests/fixtures/gpt2
"""
import json
import random
import sys
from functools import lru_cache

import regex as re


@lru_cache()
def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(2**8):
        if b not in bs:
            bs.append(b)
            cs.append(2**8 + n)
            n += 1
    cs = [chr(n) for n in cs]
    return dict(zip(bs, cs))


def get_pairs(word):
    pairs = set()
    prev_char = word[0]
    for char in word[1:]:
        pairs.add((prev_char, char))
        prev_char = char
    return pairs


class Encoder:
    def __init__(self, encoder, bpe_merges):
        self.encoder = encoder
        self.decoder = {v: k for k, v in self.encoder.items()}
        self.byte_encoder = bytes_to_unicode()
        self.byte_decoder = {v: k for k, v in self.byte_encoder.items()}
        self.bpe_ranks = dict(zip(bpe_merges, range(len(bpe_merges))))
        self.cache = {}
        self.pat = re.compile(r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+""")

    def bpe(self, token):
        if token in self.cache:
            return self.cache[token]
        word = tuple(token)
        pairs = get_pairs(word)
        if not pairs:
            return token
        while True:
            bigram = min(pairs, key=lambda pair: self.bpe_ranks.get(pair, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                    new_word.extend(word[i:j])
                    i = j
                except ValueError:
                    new_word.extend(word[i:])
                    break
                if word[i] == first and i < len(word) - 1 and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = get_pairs(word)
        word = " ".join(word)
        self.cache[token] = word
        return word

    def encode(self, text):
        bpe_tokens = []
        for token in re.findall(self.pat, text):
            token = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            bpe_tokens.extend(self.encoder[t] for t in self.bpe(token).split(" "))
        return bpe_tokens

    def decode(self, tokens):
        text = "".join(self.decoder[t] for t in tokens)
        return bytearray([self.byte_decoder[c] for c in text]).decode("utf-8", errors="replace")


WORDS = [
    "claim", "method", "apparatus", "wherein", "comprising", "semiconductor",
    "thermoelectric", "the", "a", "of", "and", "or", "Hello", "world",
    "don't", "it's", "we're", "they've", "I'm", "you'll", "he'd", "naïve",
    "café", "Zürich", "straße", "東京", "データ", "привет", "γειά", "مرحبا",
    "😀", "🚀🔥", "x86_64", "1,024", "50257", "3.14", "e.g.", "(a)", "[0035]",
    "<|endoftext|>", "<|startoftitle|>", "<|dep|>", "--", "...", "#$%",
]
CHARS = "abcXYZ019 .,;:!?'\"-_()[]{}<>|/\\@#$%^&*+=~`\t\n\r  éñüøß中文한국어🙂  ​"


def random_string(rng):
    mode = rng.randrange(4)
    if mode == 0:
        return "".join(rng.choice(CHARS) for _ in range(rng.randrange(0, 40)))
    if mode == 1:
        seps = [" ", "  ", "\n", "\t", " \n ", "", ", ", ". "]
        n = rng.randrange(1, 12)
        return "".join(rng.choice(WORDS) + rng.choice(seps) for _ in range(n))
    if mode == 2:
        return "".join(chr(rng.randrange(32, 0x250)) for _ in range(rng.randrange(1, 30)))
    # Arbitrary scalar values, skipping surrogates.
    out = []
    for _ in range(rng.randrange(1, 16)):
        cp = rng.randrange(0, 0x2FFFF)
        if 0xD800 <= cp <= 0xDFFF:
            cp = 0x20
        out.append(chr(cp))
    return "".join(out)


PATENT_PARAGRAPH = (
    "A control method and temperature optimization for temperature compensation in a "
    "thermoelectric system having a plurality of semiconductor chips mounted on a circuit "
    "board and at least two thermal sensors connected to different locations on the at least "
    "one semiconductor chip using heat dissipative members to conduct or dissipate heat. The "
    "method including: (a) generating a first set of electrical signals corresponding to the "
    "respective temperatures to a first semiconductor chip of the semiconductor chips; (b) "
    "generating a second set of electrical signals; and (c) setting the temperature based on "
    "a result of the estimation."
)


def main():
    outdir = sys.argv[1]
    with open(f"{outdir}/encoder.json", encoding="utf-8") as f:
        encoder = json.load(f)
    with open(f"{outdir}/vocab.bpe", encoding="utf-8") as f:
        bpe_data = f.read()
    merges = [tuple(s.split()) for s in bpe_data.split("\n")[1:-1]]
    enc = Encoder(encoder, merges)

    rng = random.Random(20191204)
    texts = ["Hello world", "", PATENT_PARAGRAPH, "<|startoftitle|> Cooling device <|endoftitle|>"]
    while len(texts) < 1004:
        texts.append(random_string(rng))

    hf = None
    try:
        from transformers import GPT2Tokenizer

        hf = GPT2Tokenizer(f"{outdir}/encoder.json", f"{outdir}/vocab.bpe")
    except Exception as exc:  # pragma: no cover
        print("transformers unavailable, skipping cross-check:", exc, file=sys.stderr)

    cases = []
    mismatches = 0
    for t in texts:
        ids = enc.encode(t)
        assert enc.decode(ids) == t
        if hf is not None and "<|endoftext|>" not in t:
            if hf.encode(t) != ids:
                mismatches += 1
        cases.append({"text": t, "ids": ids})
    print(f"{len(cases)} cases, {mismatches} cross-check mismatches", file=sys.stderr)
    with open(f"{outdir}/bpe_golden.json", "w", encoding="utf-8") as f:
        json.dump(cases, f, ensure_ascii=False, indent=0)


if __name__ == "__main__":
    main()
