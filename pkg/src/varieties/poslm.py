"""Order-n POS language models with modified Kneser-Ney smoothing.

Counting convention: every sentence is padded with (order-1) begin markers
(context-only, never predicted) and one end marker (predicted once). Raw
windows of every length 1..order are collected, skipping windows that end in
the begin marker. At the highest order probabilities use raw counts; at
lower orders they use continuation counts (number of distinct left
extensions), except that begin-marker-initial n-grams keep their raw counts
because nothing can precede them.

Per order, three discounts for counts of 1, 2 and >=3:

    Y   = n1 / (n1 + 2 n2)
    D_k = k - (k+1) Y n_{k+1} / n_k          (k = 1, 2, 3)

computed from the count-of-counts n_1..n_4 of the adjusted counts at that
order (begin-marker-initial grams included). Any discount falling outside
(0, k) — in particular when n_1 or n_2 vanish — falls back to 0.5 with a
warning. Probabilities are interpolated bottom-up against the uniform
distribution over the closed vocabulary (tagset + end marker), so every
conditional distribution sums to exactly one.

Models store log10 probabilities and backoff weights, the exact quantities
serialized in the ARPA text format.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus
from .lexicons import TagSet

BOS = "<s>"
EOS = "</s>"

_FALLBACK_DISCOUNT = 0.5
_PLACEHOLDER_LOG10 = -99.0


@dataclass(frozen=True)
class KneserNeyModel:
    order: int
    vocab: frozenset[str]  # predictable symbols: tagset + EOS
    logprobs: dict[tuple[str, ...], float]
    backoffs: dict[tuple[str, ...], float]
    discounts: tuple[tuple[float, float, float], ...] | None = None

    def logprob(self, word: str, history: Sequence[str]) -> float:
        """log10 P(word | history) via the standard backoff walk."""
        h = tuple(history)[-(self.order - 1) :] if self.order > 1 else ()
        acc = 0.0
        while h:
            stored = self.logprobs.get(h + (word,))
            if stored is not None:
                return acc + stored
            acc += self.backoffs.get(h, 0.0)
            h = h[1:]
        stored = self.logprobs.get((word,))
        if stored is None:
            raise ValueError(f"symbol {word!r} is outside the model vocabulary")
        return acc + stored

    def prob(self, word: str, history: Sequence[str]) -> float:
        return 10.0 ** self.logprob(word, history)


@dataclass(frozen=True)
class ChunkPerplexity:
    perplexity: float
    scored: int
    excluded: int
    log10_sum: float
    short: bool = False


@dataclass(frozen=True)
class PerplexityReport:
    perplexity: float
    scored: int
    excluded: int
    log10_sum: float
    scores_sentence_end: bool
    per_chunk: tuple[ChunkPerplexity, ...] | None = None


# ---------------------------------------------------------------------------
# training


def _collect_counts(sentences: list[list[str]], order: int):
    """Raw window counts per gram length, keyed context -> word -> count.
    Windows ending in the begin marker are not collected."""
    counts: list[dict[tuple[str, ...], dict[str, int]]] = [
        {} for _ in range(order + 1)
    ]
    pad = [BOS] * (order - 1)
    for tags in sentences:
        padded = pad + tags + [EOS]
        length = len(padded)
        for i in range(length):
            for n in range(1, order + 1):
                if i + n > length:
                    break
                word = padded[i + n - 1]
                if word == BOS:
                    continue
                ctx = tuple(padded[i : i + n - 1])
                bucket = counts[n].setdefault(ctx, {})
                bucket[word] = bucket.get(word, 0) + 1
    return counts


def _adjusted_counts(raw, order: int):
    """Continuation counts for orders below the highest; begin-marker-initial
    grams keep raw counts."""
    adjusted = [None] * (order + 1)
    adjusted[order] = raw[order]
    for n in range(order - 1, 0, -1):
        left_ext: dict[tuple[str, ...], set[str]] = {}
        for ctx, words in raw[n + 1].items():
            for word in words:
                gram = ctx + (word,)
                suffix = gram[1:]
                if suffix[0] == BOS:
                    continue
                left_ext.setdefault(suffix, set()).add(gram[0])
        level: dict[tuple[str, ...], dict[str, int]] = {}
        for ctx, words in raw[n].items():
            bucket = {}
            for word, count in words.items():
                gram = ctx + (word,)
                if gram[0] == BOS:
                    bucket[word] = count
                else:
                    bucket[word] = len(left_ext[gram])
            level[ctx] = bucket
        adjusted[n] = level
    return adjusted


def _count_of_counts(level) -> tuple[int, int, int, int]:
    n1 = n2 = n3 = n4 = 0
    for words in level.values():
        for count in words.values():
            if count == 1:
                n1 += 1
            elif count == 2:
                n2 += 1
            elif count == 3:
                n3 += 1
            elif count == 4:
                n4 += 1
    return n1, n2, n3, n4


def _estimate_discounts(level, order_label: int) -> tuple[float, float, float]:
    n1, n2, n3, n4 = _count_of_counts(level)
    if n1 == 0 or n2 == 0:
        warnings.warn(
            f"degenerate count-of-counts at order {order_label} "
            f"(n1={n1}, n2={n2}); falling back to discount "
            f"{_FALLBACK_DISCOUNT}",
            stacklevel=3,
        )
        return (_FALLBACK_DISCOUNT,) * 3
    y = n1 / (n1 + 2.0 * n2)
    discounts = []
    for k, nk, nk1 in ((1, n1, n2), (2, n2, n3), (3, n3, n4)):
        d = k - (k + 1.0) * y * nk1 / nk if nk else _FALLBACK_DISCOUNT
        if not 0.0 < d < k:
            warnings.warn(
                f"discount D{k}={d:.3f} outside (0,{k}) at order "
                f"{order_label}; falling back to {_FALLBACK_DISCOUNT}",
                stacklevel=3,
            )
            d = _FALLBACK_DISCOUNT
        discounts.append(d)
    return (discounts[0], discounts[1], discounts[2])


def _discount_for(count: int, discounts: tuple[float, float, float]) -> float:
    if count >= 3:
        return discounts[2]
    if count == 2:
        return discounts[1]
    if count == 1:
        return discounts[0]
    return 0.0


def train_lm(
    sentences: Iterable[Sequence[str]],
    tagset: TagSet | Iterable[str],
    order: int = 5,
) -> KneserNeyModel:
    """Estimate a modified-Kneser-Ney model over the closed tag vocabulary."""
    if order < 1:
        raise ValueError("order must be >= 1")
    tags = frozenset(tagset.tags if isinstance(tagset, TagSet) else tagset)
    if BOS in tags or EOS in tags:
        raise ValueError("the tagset must not contain the boundary markers")
    clean: list[list[str]] = []
    for s_idx, sentence in enumerate(sentences):
        sentence = list(sentence)
        if not sentence:
            continue
        for t_idx, tag in enumerate(sentence):
            if tag not in tags:
                raise ValueError(
                    f"out-of-tagset tag {tag!r} at sentence {s_idx}, position {t_idx}"
                )
        clean.append(sentence)
    if not clean:
        raise ValueError("training corpus is empty")

    raw = _collect_counts(clean, order)
    adjusted = _adjusted_counts(raw, order)
    discounts: list[tuple[float, float, float]] = [(0.0, 0.0, 0.0)]  # pad index 0
    for n in range(1, order + 1):
        discounts.append(_estimate_discounts(adjusted[n], n))

    vocab = sorted(tags) + [EOS]
    logprobs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}

    # unigrams: interpolate with the uniform distribution over the closed
    # vocabulary so unseen tags keep positive mass
    uni = adjusted[1].get((), {})
    total = sum(uni.values())
    d_uni = discounts[1]
    n_by_bucket = _context_bucket_counts(uni)
    gamma = _gamma(n_by_bucket, d_uni, total)
    for word in vocab:
        count = uni.get(word, 0)
        p = gamma / len(vocab)
        if count:
            p += max(count - _discount_for(count, d_uni), 0.0) / total
        logprobs[(word,)] = math.log10(p)

    for n in range(2, order + 1):
        d_n = discounts[n]
        for ctx, words in sorted(adjusted[n].items()):
            total = sum(words.values())
            gamma = _gamma(_context_bucket_counts(words), d_n, total)
            backoffs[ctx] = math.log10(gamma)
            for word, count in words.items():
                lower = 10.0 ** logprobs[ctx[1:] + (word,)]
                p = max(count - _discount_for(count, d_n), 0.0) / total
                logprobs[ctx + (word,)] = math.log10(p + gamma * lower)

    return KneserNeyModel(
        order=order,
        vocab=frozenset(vocab),
        logprobs=logprobs,
        backoffs=backoffs,
        discounts=tuple(discounts[1:]),
    )


def _context_bucket_counts(words: dict[str, int]) -> tuple[int, int, int]:
    b1 = b2 = b3 = 0
    for count in words.values():
        if count == 1:
            b1 += 1
        elif count == 2:
            b2 += 1
        elif count >= 3:
            b3 += 1
    return b1, b2, b3


def _gamma(
    buckets: tuple[int, int, int],
    discounts: tuple[float, float, float],
    total: int,
) -> float:
    return (
        discounts[0] * buckets[0]
        + discounts[1] * buckets[1]
        + discounts[2] * buckets[2]
    ) / total


# ---------------------------------------------------------------------------
# perplexity


def _score_sentence(
    model: KneserNeyModel, tags: Sequence[str], score_sentence_end: bool
) -> tuple[float, int, int]:
    """(log10 sum, scored, excluded) for one sentence. Out-of-vocabulary
    positions are skipped and truncate the history at the excluded symbol."""
    history: list[str] = [BOS] * (model.order - 1)
    log_sum = 0.0
    scored = 0
    excluded = 0
    keep = max(model.order - 1, 1)
    for tag in tags:
        if tag not in model.vocab:
            excluded += 1
            history = []
            continue
        log_sum += model.logprob(tag, history)
        scored += 1
        history.append(tag)
        if len(history) > keep:
            history = history[-keep:]
    if score_sentence_end:
        log_sum += model.logprob(EOS, history)
        scored += 1
    return log_sum, scored, excluded


def ppl(
    model: KneserNeyModel,
    sentences: Iterable[Sequence[str]],
    score_sentence_end: bool = True,
) -> PerplexityReport:
    """Perplexity 10^(-avg log10 P) over all scoring positions, excluding
    out-of-vocabulary symbols from both the sum and the token count."""
    log_sum = 0.0
    scored = 0
    excluded = 0
    seen = False
    for tags in sentences:
        if not tags:
            continue
        seen = True
        s_log, s_scored, s_excl = _score_sentence(model, tags, score_sentence_end)
        log_sum += s_log
        scored += s_scored
        excluded += s_excl
    if not seen:
        raise ValueError("empty test set")
    if scored == 0:
        raise ValueError("no in-vocabulary scoring positions in the test set")
    return PerplexityReport(
        perplexity=10.0 ** (-log_sum / scored),
        scored=scored,
        excluded=excluded,
        log10_sum=log_sum,
        scores_sentence_end=score_sentence_end,
    )


def ppl_by_chunks(
    model: KneserNeyModel,
    sentences: Sequence[Sequence[str]],
    chunk_size_sentences: int = 100,
    score_sentence_end: bool = True,
) -> PerplexityReport:
    """Per-chunk perplexities over consecutive sentence blocks; a final short
    block is retained and flagged. The whole-set figures aggregate the
    per-chunk sums token-weighted."""
    if chunk_size_sentences < 1:
        raise ValueError("chunk_size_sentences must be >= 1")
    sentences = [list(s) for s in sentences if s]
    if not sentences:
        raise ValueError("empty test set")
    chunks: list[ChunkPerplexity] = []
    total_log = 0.0
    total_scored = 0
    total_excluded = 0
    for start in range(0, len(sentences), chunk_size_sentences):
        block = sentences[start : start + chunk_size_sentences]
        log_sum = 0.0
        scored = 0
        excluded = 0
        for tags in block:
            s_log, s_scored, s_excl = _score_sentence(model, tags, score_sentence_end)
            log_sum += s_log
            scored += s_scored
            excluded += s_excl
        if scored == 0:
            raise ValueError("a chunk has no in-vocabulary scoring positions")
        chunks.append(
            ChunkPerplexity(
                perplexity=10.0 ** (-log_sum / scored),
                scored=scored,
                excluded=excluded,
                log10_sum=log_sum,
                short=len(block) < chunk_size_sentences,
            )
        )
        total_log += log_sum
        total_scored += scored
        total_excluded += excluded
    return PerplexityReport(
        perplexity=10.0 ** (-total_log / total_scored),
        scored=total_scored,
        excluded=total_excluded,
        log10_sum=total_log,
        scores_sentence_end=score_sentence_end,
        per_chunk=tuple(chunks),
    )


# ---------------------------------------------------------------------------
# ARPA interchange


def write_arpa(model: KneserNeyModel, path: str | Path) -> None:
    """Standard ARPA text format. Pure-context entries (the all-begin-marker
    runs) carry the conventional placeholder probability."""
    by_order: list[dict[tuple[str, ...], tuple[float, float | None]]] = [
        {} for _ in range(model.order + 1)
    ]
    for gram, lp in model.logprobs.items():
        by_order[len(gram)][gram] = (lp, None)
    for ctx, bow in model.backoffs.items():
        lp = model.logprobs.get(ctx, _PLACEHOLDER_LOG10)
        by_order[len(ctx)][ctx] = (lp, bow)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write(f"ngram {n}={len(by_order[n])}\n")
        fh.write("\n")
        for n in range(1, model.order + 1):
            fh.write(f"\\{n}-grams:\n")
            for gram in sorted(by_order[n]):
                lp, bow = by_order[n][gram]
                line = f"{lp:.7f}\t{' '.join(gram)}"
                if bow is not None:
                    line += f"\t{bow:.7f}"
                fh.write(line + "\n")
            fh.write("\n")
        fh.write("\\end\\\n")


def read_arpa(path: str | Path) -> KneserNeyModel:
    """Parse an ARPA file back into a scoring model. Section lengths must
    match the \\data\\ header."""
    path = Path(path)
    logprobs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    declared: dict[int, int] = {}
    section: int | None = None
    seen: dict[int, int] = {}
    state = "preamble"
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if state == "preamble":
                if line == "\\data\\":
                    state = "counts"
                continue
            if line == "\\end\\":
                state = "done"
                break
            if line.startswith("\\") and line.endswith("-grams:"):
                n = int(line[1:].split("-")[0])
                if n not in declared:
                    raise ValueError(
                        f"{path}:{line_no}: section {n}-grams not declared in header"
                    )
                section = n
                seen[n] = 0
                state = "grams"
                continue
            if state == "counts":
                if not line.startswith("ngram "):
                    raise ValueError(f"{path}:{line_no}: expected 'ngram N=count'")
                spec_part = line[len("ngram ") :]
                n_text, _, count_text = spec_part.partition("=")
                declared[int(n_text)] = int(count_text)
                continue
            if state == "grams":
                fields = line.split("\t")
                if len(fields) == 1:
                    # tolerate space-separated files: prob, n symbols, then an
                    # optional backoff weight
                    parts = line.split()
                    if len(parts) == section + 2:
                        fields = [parts[0], " ".join(parts[1:-1]), parts[-1]]
                    else:
                        fields = [parts[0], " ".join(parts[1:])]
                if len(fields) not in (2, 3):
                    raise ValueError(f"{path}:{line_no}: malformed n-gram line")
                gram = tuple(fields[1].split())
                if len(gram) != section:
                    raise ValueError(
                        f"{path}:{line_no}: {len(gram)}-gram in the {section}-grams section"
                    )
                logprobs[gram] = float(fields[0])
                if len(fields) == 3:
                    backoffs[gram] = float(fields[2])
                seen[section] += 1
                continue
    if state != "done":
        raise ValueError(f"{path}: missing \\end\\ marker")
    if not declared:
        raise ValueError(f"{path}: no n-gram sections declared")
    for n, count in declared.items():
        if seen.get(n, 0) != count:
            raise ValueError(
                f"{path}: section {n}-grams has {seen.get(n, 0)} entries, "
                f"header declares {count}"
            )
    order = max(declared)
    vocab = frozenset(g[0] for g in logprobs if len(g) == 1 and g[0] != BOS)
    return KneserNeyModel(
        order=order,
        vocab=vocab,
        logprobs=logprobs,
        backoffs=backoffs,
        discounts=None,
    )


# ---------------------------------------------------------------------------
# POS-sequence I/O


def pos_sequences(corpus: Corpus) -> list[list[str]]:
    """POS tag sequences of a tagged corpus; every token must carry a tag."""
    out = []
    for s_idx, sent in enumerate(corpus.sentences):
        tags = []
        for t_idx, tok in enumerate(sent.tokens):
            if tok.pos is None:
                raise ValueError(
                    f"token {t_idx} of sentence {s_idx} is missing its POS tag"
                )
            tags.append(tok.pos)
        out.append(tags)
    return out


def read_pos_sentences(path: str | Path) -> list[list[str]]:
    """One space-separated tag sentence per line; blank lines are skipped."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tags = line.split()
            if tags:
                sentences.append(tags)
    return sentences


def write_pos_sentences(sentences: Iterable[Sequence[str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tags in sentences:
            fh.write(" ".join(tags) + "\n")
