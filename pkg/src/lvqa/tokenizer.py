"""Word-level toy tokenizer with atomic digit tokens.

Splitting numbers into single digits keeps the vocabulary closed while
supporting unbounded timestamp values; decode re-joins digit runs, so
encode/decode round-trips in-vocabulary text.
"""

from __future__ import annotations

from .errors import ConfigError, VocabError

PAD, BOS, EOS, VIS = "<pad>", "<bos>", "<eos>", "<vis>"
DIGITS = tuple(str(d) for d in range(10))
RESERVED = (PAD, BOS, EOS, VIS) + DIGITS + ("timestamp:", "seconds")


class Tokenizer:
    def __init__(self, words, max_size: int = 512):
        vocab = list(RESERVED)
        seen = set(vocab)
        for word in words:
            if word not in seen:
                seen.add(word)
                vocab.append(word)
        if len(vocab) > max_size:
            raise ConfigError(f"vocabulary size {len(vocab)} exceeds cap {max_size}")
        self._words = vocab
        self._ids = {w: i for i, w in enumerate(vocab)}
        self.pad_id = self._ids[PAD]
        self.bos_id = self._ids[BOS]
        self.eos_id = self._ids[EOS]
        self.vis_id = self._ids[VIS]
        self._digit_ids = {self._ids[d] for d in DIGITS}

    def __len__(self) -> int:
        return len(self._words)

    @property
    def words(self) -> list[str]:
        return list(self._words)

    def id_of(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise VocabError(f"word {word!r} not in vocabulary") from None

    def is_digit_id(self, token_id: int) -> bool:
        return token_id in self._digit_ids

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in text.split():
            if word.isdigit():
                ids.extend(self._ids[ch] for ch in word)
            elif word in self._ids:
                ids.append(self._ids[word])
            else:
                raise VocabError(f"word {word!r} not in vocabulary")
        return ids

    def decode(self, ids) -> str:
        words: list[str] = []
        digits: list[str] = []
        for tid in ids:
            word = self._words[tid]
            if tid in self._digit_ids:
                digits.append(word)
                continue
            if digits:
                words.append("".join(digits))
                digits.clear()
            words.append(word)
        if digits:
            words.append("".join(digits))
        return " ".join(words)
