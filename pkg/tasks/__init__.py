from .matching_pool import MatchingPool

__all__ = ['MatchingPool']
