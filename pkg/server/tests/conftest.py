import sys
from pathlib import Path

_ROOT = Path(__file__).parent.parent.parent
# Primary package, this server package, and the primary's test helpers
# (remote_conformance) all need to be importable here.
for _rel in ("src", "server/src", "tests"):
    _path = str(_ROOT / _rel)
    if _path not in sys.path:
        sys.path.insert(0, _path)
