"""Weighted decoding with entropy-adaptive control strength over n-gram LMs
and prefix attribute classifiers."""

__version__ = "0.1.0"
