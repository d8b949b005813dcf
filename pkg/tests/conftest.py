import pytest

from varieties.corpus import AnnotatedSentence, Chunk, Corpus, Token
from varieties.lexicons import default_resources


@pytest.fixture(scope="session")
def resources():
    return default_resources()


def make_sentence(words, variety="N", pos=None, lemma=None, country=None):
    tokens = tuple(
        Token(
            surface=w,
            pos=pos[i] if pos is not None else None,
            lemma=lemma[i] if lemma is not None else None,
        )
        for i, w in enumerate(words)
    )
    return AnnotatedSentence(tokens=tokens, variety=variety, country=country)


def make_corpus(sentences, provenance="test"):
    return Corpus(sentences=tuple(sentences), provenance=provenance)


def make_chunk(sentences):
    sentences = tuple(sentences)
    return Chunk(
        sentences=sentences,
        token_count=sum(s.token_count for s in sentences),
        variety=sentences[0].variety,
    )


@pytest.fixture
def sentence_factory():
    return make_sentence


@pytest.fixture
def corpus_factory():
    return make_corpus


@pytest.fixture
def chunk_factory():
    return make_chunk
