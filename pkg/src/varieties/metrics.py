"""The five variety metrics and total-sum normalization.

Each metric maps a corpus to a nonnegative scalar:

  TTR                 distinct lemmas / tokens (lexical richness)
  MEAN_WORD_RANK      mean frequency rank of non-function-word tokens
  COLLOCATION_TYPES   number of distinct idiomatic expressions present
  TRANSITIONS         sentence-transition markers per token
  PRONOUNS            PRP / PRP$ tokens per token

Metric triples over (N, T, NN) corpora are compared after dividing each
value by the triple's sum, which makes them scale-invariant.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus import Corpus
from .lexicons import PhraseList, RankList, WordList, match_phrases

TTR = "TTR"
MEAN_WORD_RANK = "MEAN_WORD_RANK"
COLLOCATION_TYPES = "COLLOCATION_TYPES"
TRANSITIONS = "TRANSITIONS"
PRONOUNS = "PRONOUNS"
METRIC_NAMES = (TTR, MEAN_WORD_RANK, COLLOCATION_TYPES, TRANSITIONS, PRONOUNS)

_PRONOUN_TAGS = frozenset({"PRP", "PRP$"})


@dataclass(frozen=True)
class MetricValue:
    metric: str
    raw: float
    basis: int  # token count the value was computed over

    def __post_init__(self):
        if self.raw < 0:
            raise ValueError("metric values are nonnegative")
        if self.basis <= 0:
            raise ValueError("metric basis must be positive")


@dataclass(frozen=True)
class MetricTriple:
    metric: str
    raw_n: float
    raw_t: float
    raw_nn: float
    norm_n: float
    norm_t: float
    norm_nn: float


@dataclass(frozen=True)
class SizeCheck:
    ok: bool
    message: str
    offenders: tuple[str, ...] = ()


def ttr(corpus: Corpus) -> MetricValue:
    """Distinct (lemmatized) tokens over total tokens; lemma falls back to
    the lowercased surface."""
    if corpus.token_count == 0:
        raise ValueError("cannot compute TTR of an empty corpus")
    lemmas = {tok.lemma_or_surface for tok in corpus.tokens()}
    return MetricValue(
        metric=TTR, raw=len(lemmas) / corpus.token_count, basis=corpus.token_count
    )


def mean_word_rank(corpus: Corpus, ranks: RankList, fw: WordList) -> MetricValue:
    """Mean frequency rank over tokens that are neither function words nor
    missing from the rank list; excluded tokens leave both numerator and
    denominator."""
    total = 0
    included = 0
    for tok in corpus.tokens():
        if tok.surface in fw:
            continue
        rank = ranks.rank(tok.surface)
        if rank is None:
            continue
        total += rank
        included += 1
    if included == 0:
        raise ValueError("no token is covered by the rank list")
    return MetricValue(metric=MEAN_WORD_RANK, raw=total / included, basis=included)


def idiom_token_counts(corpus: Corpus, idioms: PhraseList) -> dict[str, int]:
    """Token-level match counts per idiom (auxiliary output for qualitative
    frequency queries)."""
    counts: Counter = Counter()
    for sent in corpus.sentences:
        for entry, _ in match_phrases(sent.surfaces(), idioms):
            counts[entry.text] += 1
    return dict(counts)


def collocation_types(corpus: Corpus, idioms: PhraseList) -> MetricValue:
    """Number of distinct idiom types with at least one match."""
    if corpus.token_count == 0:
        raise ValueError("cannot scan an empty corpus for idioms")
    types = idiom_token_counts(corpus, idioms)
    return MetricValue(
        metric=COLLOCATION_TYPES, raw=float(len(types)), basis=corpus.token_count
    )


def transitions(corpus: Corpus, markers: PhraseList) -> MetricValue:
    """Sentence-transition matches per token."""
    if len(markers) == 0:
        raise ValueError("empty transition-marker list")
    if corpus.token_count == 0:
        raise ValueError("cannot scan an empty corpus for transitions")
    hits = 0
    for sent in corpus.sentences:
        hits += len(match_phrases(sent.surfaces(), markers))
    return MetricValue(
        metric=TRANSITIONS, raw=hits / corpus.token_count, basis=corpus.token_count
    )


def pronouns(corpus: Corpus) -> MetricValue:
    """Personal + possessive pronouns (PRP, PRP$) per token; requires POS
    tags on every token."""
    if corpus.token_count == 0:
        raise ValueError("cannot compute pronoun frequency of an empty corpus")
    hits = 0
    for tok in corpus.tokens():
        if tok.pos is None:
            raise ValueError(f"token {tok.surface!r} is missing its POS tag")
        if tok.pos in _PRONOUN_TAGS:
            hits += 1
    return MetricValue(
        metric=PRONOUNS, raw=hits / corpus.token_count, basis=corpus.token_count
    )


def noun_frequency(corpus: Corpus) -> MetricValue:
    """Nouns + proper nouns (NN*, NNP*) per token — the complement check to
    the pronoun metric."""
    if corpus.token_count == 0:
        raise ValueError("empty corpus")
    hits = 0
    for tok in corpus.tokens():
        if tok.pos is None:
            raise ValueError(f"token {tok.surface!r} is missing its POS tag")
        if tok.pos in ("NN", "NNS", "NNP", "NNPS"):
            hits += 1
    return MetricValue(
        metric="NOUNS", raw=hits / corpus.token_count, basis=corpus.token_count
    )


def check_sizes(
    corpus_n: Corpus, corpus_nn: Corpus, corpus_t: Corpus, tolerance: float = 0.01
) -> SizeCheck:
    """Equal-size guard: pairwise token counts must agree within
    ``tolerance`` (relative to the larger of each pair)."""
    sizes = {
        "N": corpus_n.token_count,
        "NN": corpus_nn.token_count,
        "T": corpus_t.token_count,
    }
    empty = tuple(name for name, size in sizes.items() if size == 0)
    if empty:
        return SizeCheck(
            ok=False,
            message=f"empty corpus: {', '.join(empty)}",
            offenders=empty,
        )
    names = sorted(sizes)
    offenders = set()
    for a_idx in range(len(names)):
        for b_idx in range(a_idx + 1, len(names)):
            a, b = names[a_idx], names[b_idx]
            if abs(sizes[a] - sizes[b]) > tolerance * max(sizes[a], sizes[b]):
                # blame the one farther from the median size
                median = sorted(sizes.values())[1]
                offenders.add(max((a, b), key=lambda l: abs(sizes[l] - median)))
    if offenders:
        detail = ", ".join(f"{l}={sizes[l]}" for l in names)
        return SizeCheck(
            ok=False,
            message=f"token counts differ by more than {tolerance:.0%}: {detail} "
            f"(offending: {', '.join(sorted(offenders))})",
            offenders=tuple(sorted(offenders)),
        )
    return SizeCheck(ok=True, message="token counts agree within tolerance")


def normalize_triple(
    metric: str, raw_n: float, raw_t: float, raw_nn: float
) -> MetricTriple:
    """Total-sum normalization of a metric triple; values then sum to 1."""
    total = raw_n + raw_t + raw_nn
    if total <= 0:
        raise ValueError("cannot normalize an all-zero metric triple")
    return MetricTriple(
        metric=metric,
        raw_n=raw_n,
        raw_t=raw_t,
        raw_nn=raw_nn,
        norm_n=raw_n / total,
        norm_t=raw_t / total,
        norm_nn=raw_nn / total,
    )
