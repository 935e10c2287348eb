"""
Lexical snippet store backing the Retrieval augmentation route
"""
import json
import logging
import math
import re
from collections import Counter
from pathlib import Path
from typing import Dict, List, Sequence, Union

from models import ScoredSnippet, Snippet, SnippetIndex
from utils.error_handling import SnippetIndexError, SnippetStoreError

logger = logging.getLogger(__name__)

K1 = 1.2
B = 0.75
DEFAULT_TOP_K = 3

# Decimal numbers stay whole ("6.5"); everything else splits on non-alphanumerics.
TOKEN_PATTERN = re.compile(r'\d+(?:\.\d+)+|[^\W_]+')


def tokenize(text: str) -> List[str]:
    return TOKEN_PATTERN.findall(text.lower())


def index_snippets(snippets: Sequence[Snippet]) -> SnippetIndex:
    """
    Build an inverted index

    Args:
        snippets: Snippets with unique ids

    Returns:
        SnippetIndex
    """
    by_id: Dict[str, Snippet] = {}
    postings: Dict[str, List] = {}
    doc_lengths: Dict[str, int] = {}

    for snippet in snippets:
        if snippet.id in by_id:
            raise SnippetIndexError(snippet.id)
        by_id[snippet.id] = snippet
        tokens = tokenize(snippet.text)
        doc_lengths[snippet.id] = len(tokens)
        for token, tf in Counter(tokens).items():
            postings.setdefault(token, []).append((snippet.id, tf))

    frozen = {token: tuple(sorted(entries)) for token, entries in postings.items()}
    return SnippetIndex(postings=frozen, doc_lengths=doc_lengths, doc_count=len(by_id), snippets=by_id)


def idf(index: SnippetIndex, token: str) -> float:
    # +1 inside the log keeps idf positive for terms in most documents
    df = index.document_frequency(token)
    return math.log(1 + (index.doc_count - df + 0.5) / (df + 0.5))


def query_top_k(index: SnippetIndex, query_text: str, k: int = DEFAULT_TOP_K) -> List[ScoredSnippet]:
    """
    Rank snippets against a query with BM25 (k1=1.2, b=0.75)

    Repeated query tokens count once per occurrence. Only snippets sharing
    at least one token with the query are returned; ties go to the smaller id.
    idf and the average length are store-wide, so adding any snippet can
    reorder results that mix several query tokens or lengths. A snippet with
    no query token never enters the results, and when it has the average
    length a single-token query keeps its order.

    Args:
        index: Snippet index
        query_text: Free-text query
        k: Maximum number of results

    Returns:
        list of ScoredSnippet, best first
    """
    if k < 1:
        raise ValueError('k must be at least 1')
    if not index.doc_count:
        return []

    avgdl = index.average_length or 1.0
    scores: Dict[str, float] = {}
    for token in tokenize(query_text):
        entries = index.postings.get(token)
        if not entries:
            continue
        weight = idf(index, token)
        for snippet_id, tf in entries:
            norm = K1 * (1 - B + B * index.doc_lengths[snippet_id] / avgdl)
            scores[snippet_id] = scores.get(snippet_id, 0.0) + weight * tf * (K1 + 1) / (tf + norm)

    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return [ScoredSnippet(index.snippets[snippet_id], score) for snippet_id, score in ranked]


def load_snippets(path: Union[str, Path]) -> List[Snippet]:
    """
    Read a JSON Lines snippet store with keys id, source, text

    Args:
        path: Store file

    Returns:
        list of Snippet in file order
    """
    snippets = []
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise SnippetStoreError(f'Cannot read snippet store {path}: {e}')

    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            item = json.loads(line)
            snippets.append(Snippet(str(item['id']), str(item.get('source', '')), str(item['text'])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise SnippetStoreError(f'{path}:{number}: invalid snippet ({e})', number)

    logger.info(f"Loaded {len(snippets)} snippets from {path}")
    return snippets


def load_index(path: Union[str, Path]) -> SnippetIndex:
    return index_snippets(load_snippets(path))
