"""Serve an n-gram model over HTTP and drive it through the remote backend.

The server exposes POST /v1/generate, POST /v1/score, and GET /v1/health;
the remote backend is a drop-in generator/scorer for every pipeline in the
library. Run from the repository root (needs server/src on the path).
"""

import json
import sys
import tempfile
import threading
import urllib.request
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "server" / "src"))

from model_server.app import create_server
from model_server.models import NGramFileModel

from stgraph import (
    EffectType,
    GenerationConfig,
    Relation,
    build_query,
    iterative_graph_gen,
    remote_backend,
    train_ngram,
)

context = "Clouds gather over the valley. Rivers feed the lake."
pairs = []
for key in range(20):
    surface = build_query(context, f"omen{key}", Relation.HELPS,
                          EffectType.IMMINENT).surface
    pairs.append((surface, f"sign{key} appears"))

with tempfile.TemporaryDirectory() as tmp:
    model_path = Path(tmp) / "model.json"
    train_ngram(pairs * 4, n=6).save(model_path)

    httpd = create_server(NGramFileModel(model_path))
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    host, port = httpd.server_address
    url = f"http://{host}:{port}"
    print("server listening at", url)

    with urllib.request.urlopen(url + "/v1/health") as response:
        print("health:", json.loads(response.read()))

    backend = remote_backend(url, timeout=5.0)
    config = GenerationConfig(top_p=0.5, max_tokens=8, seed=3)
    graph = iterative_graph_gen(
        backend, context, "omen7",
        [(Relation.HELPS, EffectType.IMMINENT)], config,
    )
    print("generated over the wire:", graph.flatten())

    scored = backend.score(
        build_query(context, "omen7", Relation.HELPS, EffectType.IMMINENT),
        "sign7 appears",
    )
    print(f"score of the right continuation: {scored.logprob:.4f} "
          f"({scored.token_count} tokens)")

    httpd.shutdown()
    httpd.server_close()
