"""Reference external NER backend for the ner-audit wire protocol.

Speaks line-delimited JSON on stdin/stdout or a TCP socket: one request per
line, one response per line. Ships a dependency-free rule-based tagger for
tests and can wrap third-party pipelines (spaCy) without re-tokenizing.
"""

from .rules import RULE_LABELS, rule_based_tags
from .server import AdapterSession, build_session, serve_stdio, serve_tcp

__version__ = "0.1.0"
