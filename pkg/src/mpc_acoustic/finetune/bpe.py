"""Byte-pair-encoding vocabulary: training, encoding, decoding.

Words are split on single spaces. A word is a sequence of characters whose
last symbol carries the end-of-word marker, so ``"ab"`` starts as
``["a", "b</w>"]``. Both marked and unmarked forms of every training
character are part of the base vocabulary, which keeps encoding total over
the training character set.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

EOW = "</w>"
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


def _word_symbols(word: str) -> list[str]:
    return list(word[:-1]) + [word[-1] + EOW]


def _apply_merge(symbols: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


@dataclass
class TokenVocab:
    symbols: list[str]
    merges: list[tuple[str, str]] = field(default_factory=list)
    target_size: int | None = None

    def __post_init__(self):
        if tuple(self.symbols[:4]) != SPECIALS:
            raise ValueError(f"vocabulary must start with the special symbols {SPECIALS}")
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        self._ranks = {pair: r for r, pair in enumerate(self.merges)}

    def __len__(self) -> int:
        return len(self.symbols)

    @classmethod
    def from_words(cls, words) -> "TokenVocab":
        """Fixed word-level vocabulary without merges: one id per word."""
        return cls(list(SPECIALS) + [w + EOW for w in words])

    def id(self, symbol: str) -> int:
        return self._index.get(symbol, UNK_ID)

    def segment(self, word: str) -> list[str]:
        if not self.merges and word + EOW in self._index:
            return [word + EOW]
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            ranked = [(self._ranks.get((a, b)), i) for i, (a, b) in enumerate(zip(symbols, symbols[1:]))]
            ranked = [(r, i) for r, i in ranked if r is not None]
            if not ranked:
                break
            best = min(ranked)[0]
            pair = self.merges[best]
            symbols = _apply_merge(symbols, pair, pair[0] + pair[1])
        return symbols

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in text.split(" "):
            if word:
                ids.extend(self.id(s) for s in self.segment(word))
        return ids

    def decode(self, ids) -> str:
        pieces = []
        for i in ids:
            i = int(i)
            if i < len(SPECIALS):
                continue
            pieces.append(self.symbols[i])
        return "".join(pieces).replace(EOW, " ").rstrip(" ")

    def to_json(self) -> str:
        return json.dumps({"symbols": self.symbols, "merges": [list(m) for m in self.merges],
                           "target_size": self.target_size})

    @classmethod
    def from_json(cls, text: str) -> "TokenVocab":
        d = json.loads(text)
        return cls(d["symbols"], [tuple(m) for m in d["merges"]], d.get("target_size"))


def bpe_train(corpus, target_size: int = 8000) -> TokenVocab:
    """Greedy most-frequent-pair merging until ``target_size`` symbols.

    Counting is word-internal. Ties between equally frequent pairs go to the
    lexicographically smallest pair. Stops early once no pair occurs twice.
    """
    lines = [line for line in corpus if line.strip()]
    if not lines:
        raise ValueError("bpe_train: empty corpus")
    word_counts = Counter(w for line in lines for w in line.split(" ") if w)
    chars = sorted({c for w in word_counts for c in w})
    base = sorted(set(chars) | {c + EOW for c in chars})
    if target_size < len(SPECIALS) + len(base):
        raise ValueError(f"target size {target_size} is below the base vocabulary of "
                         f"{len(SPECIALS) + len(base)} symbols")
    words = {w: _word_symbols(w) for w in word_counts}
    symbols = list(SPECIALS) + base
    known = set(symbols)
    merges: list[tuple[str, str]] = []
    while len(symbols) < target_size:
        pairs: Counter = Counter()
        for w, syms in words.items():
            n = word_counts[w]
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += n
        if not pairs:
            break
        top = max(pairs.values())
        if top < 2:
            break
        pair = min(p for p, c in pairs.items() if c == top)
        merged = pair[0] + pair[1]
        merges.append(pair)
        if merged not in known:
            symbols.append(merged)
            known.add(merged)
        words = {w: _apply_merge(s, pair, merged) for w, s in words.items()}
    return TokenVocab(symbols, merges, target_size)
