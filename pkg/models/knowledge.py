import math
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple


@dataclass(frozen=True)
class Snippet:
    id: str
    source: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f'Snippet {self.id!r} has empty text')

    def to_dict(self):
        return {'id': self.id, 'source': self.source, 'text': self.text}


@dataclass(frozen=True)
class SnippetIndex:
    """Inverted index over a snippet store; immutable once built"""
    postings: Mapping[str, Tuple[Tuple[str, int], ...]]
    doc_lengths: Mapping[str, int]
    doc_count: int
    snippets: Mapping[str, Snippet]

    @property
    def average_length(self) -> float:
        if not self.doc_count:
            return 0.0
        return sum(self.doc_lengths.values()) / self.doc_count

    def document_frequency(self, token: str) -> int:
        return len(self.postings.get(token, ()))


@dataclass(frozen=True)
class ScoredSnippet:
    snippet: Snippet
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score) or self.score < 0:
            raise ValueError(f'Snippet score must be finite and non-negative, got {self.score}')

    def to_dict(self) -> Dict[str, object]:
        return {'id': self.snippet.id, 'source': self.snippet.source, 'score': self.score}
