"""Ranking and text-overlap metrics: MRR, ROUGE-N, ROUGE-L, pass@k."""

from __future__ import annotations

import math
import re
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

from ..errors import DomainError, EmptyInput, PreconditionError

# multi-character operators first so "<=" stays one token
_CODE_TOKEN = re.compile(
    r"[A-Za-z_][A-Za-z0-9_$]*|\d+'[sS]?[bodhBODH][0-9a-fA-FxXzZ_?]+|\d+"
    r"|<<<|>>>|===|!==|<=|>=|==|!=|&&|\|\||<<|>>|~&|~\||~\^|\^~|\+:|-:|\S"
)

EXACT_PASS_AT_K_LIMIT = 2000


def code_tokens(text: str) -> list[str]:
    """Whitespace- and punctuation-separated tokens; operators kept whole."""
    return _CODE_TOKEN.findall(text)


def reciprocal_rank(rank: int | None) -> float:
    if rank is None:
        return 0.0
    if rank < 1:
        raise PreconditionError(f"rank must be >= 1, got {rank}")
    return 1.0 / rank


def mrr(ranks: Sequence[int | None]) -> float:
    """Mean reciprocal rank; a missing rank contributes 0."""
    if not ranks:
        raise EmptyInput("mrr of zero queries")
    return math.fsum(reciprocal_rank(r) for r in ranks) / len(ranks)


def _prf(overlap: int, n_pred: int, n_ref: int) -> tuple[float, float, float]:
    if overlap == 0 or n_pred == 0 or n_ref == 0:
        return 0.0, 0.0, 0.0
    p = overlap / n_pred
    r = overlap / n_ref
    return p, r, 2 * p * r / (p + r)


def ngrams(tokens: Sequence[str], n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(prediction: Sequence[str], reference: Sequence[str], n: int = 1
            ) -> tuple[float, float, float]:
    """(precision, recall, F1) of clipped n-gram overlap."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    pred, ref = ngrams(prediction, n), ngrams(reference, n)
    overlap = sum((pred & ref).values())
    return _prf(overlap, sum(pred.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(prediction: Sequence[str], reference: Sequence[str]) -> tuple[float, float, float]:
    return _prf(lcs_length(prediction, reference), len(prediction), len(reference))


@dataclass(frozen=True)
class PassAtKInput:
    n: int
    c_p: int
    k: int

    def validate(self) -> None:
        if not (0 <= self.c_p <= self.n):
            raise DomainError(f"need 0 <= c_p <= n, got c_p={self.c_p}, n={self.n}")
        if not (1 <= self.k <= self.n):
            raise DomainError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")


def pass_at_k(n: int | PassAtKInput, c_p: int | None = None, k: int | None = None) -> float:
    """Unbiased pass@k estimate ``1 - C(n - c_p, k) / C(n, k)``.

    Exact rational arithmetic up to n = 2000, the stable product form above.
    """
    inp = n if isinstance(n, PassAtKInput) else PassAtKInput(n, c_p, k)  # type: ignore[arg-type]
    inp.validate()
    n, c, k = inp.n, inp.c_p, inp.k
    if n - c < k:
        return 1.0
    if n <= EXACT_PASS_AT_K_LIMIT:
        return float(1 - Fraction(math.comb(n - c, k), math.comb(n, k)))
    fail = 1.0
    for i in range(n - c + 1, n + 1):
        fail *= 1.0 - k / i
    return 1.0 - fail
