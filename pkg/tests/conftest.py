import numpy as np
import pytest

from hatedetect.corpus import HATE, NON_HATE, LabeledExample
from hatedetect.embed import EmbeddingMatrix, Vocabulary
from hatedetect.textprep import PAD_TOKEN, UNK_TOKEN, PipelineConfig

TRIGGER_TOKENS = ("scum", "vermin", "trash", "filth", "parasite")
FILLER_TOKENS = tuple(f"w{i:02d}" for i in range(40))


def make_keyword_examples(n: int, seed: int = 5):
    """Synthetic texts labeled hate iff one of the trigger tokens occurs."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n):
        length = int(rng.integers(8, 15))
        words = [FILLER_TOKENS[j] for j in rng.integers(0, len(FILLER_TOKENS), length)]
        is_hate = i % 2 == 0
        if is_hate:
            for _ in range(int(rng.integers(1, 3))):
                position = int(rng.integers(0, len(words) + 1))
                words.insert(position, TRIGGER_TOKENS[int(rng.integers(0, len(TRIGGER_TOKENS)))])
        examples.append(
            LabeledExample(
                id=f"synthetic:{i}",
                text=" ".join(words),
                raw_label="flagged" if is_hate else "clean",
                binary_label=HATE if is_hate else NON_HATE,
            )
        )
    return examples


def make_vocab(tokens) -> Vocabulary:
    tokens = list(tokens)
    return Vocabulary([PAD_TOKEN, UNK_TOKEN, *tokens], [0, 0, *([1] * len(tokens))])


def make_random_matrix(tokens, dim: int, seed: int = 0) -> EmbeddingMatrix:
    vocab = make_vocab(tokens)
    rng = np.random.default_rng(seed)
    vectors = rng.normal(0.0, 0.3, (len(vocab), dim))
    vectors[0] = 0.0
    return EmbeddingMatrix(vectors, vocab)


@pytest.fixture(scope="session")
def keyword_examples():
    return make_keyword_examples(2000)


@pytest.fixture(scope="session")
def plain_pipeline():
    """No stopword filtering; handy for synthetic vocabularies."""
    return PipelineConfig(stopwords=frozenset(), max_len=20)
