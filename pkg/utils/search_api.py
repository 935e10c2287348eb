import logging
from dataclasses import dataclass
from typing import List, Optional

import requests

from config.settings import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    summary: str


class WebSearchClient:
    """
    Client for a JSON web-search endpoint answering
    {"results": [{"title", "url", "snippet"}]}
    """

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 timeout: Optional[float] = None):
        self.base_url = base_url or Config.SEARCH_URL
        self.api_key = api_key if api_key is not None else Config.SEARCH_API_KEY
        self.timeout = timeout if timeout is not None else Config.SEARCH_TIMEOUT

    def search(self, query: str, k: int) -> List[SearchResult]:
        """
        Search the web for a query

        Args:
            query: Search text
            k: Maximum number of results

        Returns:
            list of SearchResult; empty when the search fails
        """
        headers = {'Accept': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f'Bearer {self.api_key}'

        try:
            response = requests.get(self.base_url, params={'q': query, 'count': k},
                                    headers=headers, timeout=self.timeout)

            if not response.ok:
                logger.warning(f"Search returned HTTP {response.status_code} for {query!r}")
                return []

            results = []
            for item in (response.json().get('results') or [])[:k]:
                summary = (item.get('snippet') or '').strip()
                if summary:
                    results.append(SearchResult(item.get('title', ''), item.get('url', ''), summary))
            return results

        except requests.Timeout:
            logger.warning(f"Search request timeout for {query!r}")
            return []
        except requests.RequestException as e:
            logger.warning(f"Search network error for {query!r}: {str(e)}")
            return []
        except (ValueError, AttributeError) as e:
            logger.warning(f"Search response for {query!r} is not usable JSON: {str(e)}")
            return []
