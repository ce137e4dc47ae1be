import pytest

from lvqa.errors import ConfigError, VocabError
from lvqa.tokenizer import Tokenizer


@pytest.fixture
def vocab():
    return Tokenizer(["the", "polyp", "is", "visible", "fluid"])


def test_round_trip_plain_text(vocab):
    text = "the polyp is visible"
    assert vocab.decode(vocab.encode(text)) == text


def test_round_trip_with_numbers(vocab):
    text = "timestamp: 105 seconds"
    ids = vocab.encode(text)
    assert len(ids) == 5  # timestamp: 1 0 5 seconds
    assert vocab.decode(ids) == text


def test_digits_are_atomic(vocab):
    ids = vocab.encode("42")
    assert [vocab.decode([i]) for i in ids] == ["4", "2"]


def test_out_of_vocabulary_raises(vocab):
    with pytest.raises(VocabError):
        vocab.encode("the stent is visible")


def test_reserved_tokens_present(vocab):
    assert vocab.pad_id != vocab.eos_id
    assert vocab.id_of("timestamp:") >= 0
    assert vocab.is_digit_id(vocab.id_of("7"))


def test_vocabulary_cap():
    with pytest.raises(ConfigError):
        Tokenizer([f"w{i}" for i in range(600)])
