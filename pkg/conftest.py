import sys
from pathlib import Path

_ROOT = Path(__file__).parent
for _rel in ("src", "server/src"):
    _path = str(_ROOT / _rel)
    if _path not in sys.path:
        sys.path.insert(0, _path)
