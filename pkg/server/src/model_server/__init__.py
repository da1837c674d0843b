"""Thin HTTP model server speaking the generate/score wire protocol.

Serves a causal token-level model over three endpoints: POST /v1/generate
(nucleus-sampled continuation), POST /v1/score (forced-decoding log-prob
sum), and GET /v1/health. The served model is either a persisted n-gram
count-table file or one of the built-in test models.
"""

__version__ = "0.1.0"

from .models import CannedTestModel, NGramFileModel, UniformTestModel, decode, forced_score
from .app import create_server, main
