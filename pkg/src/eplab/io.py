"""Binary grid dumps and flat ``key = value`` configuration files.

A dump is a text header line

    EPLGRID v1 dim=<n> extents=<e1,...,en> h=<h> origin=<o1,...,on> components=<N>

followed by the row-major little-endian float64 node values (components
minor). The interior mask goes to a companion ``.mask`` file holding one
byte (0 or 1) per node.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import GridDomain, GridFunction
from .reports import fmt_float

MAGIC = "EPLGRID v1"


class GridFormatError(ValueError):
    pass


def _mask_path(path: Path) -> Path:
    return path.with_name(path.name + ".mask")


def write_grid(u: GridFunction, path: str | Path) -> None:
    path = Path(path)
    dom = u.domain
    header = (
        f"{MAGIC} dim={dom.dim} extents={','.join(map(str, dom.extents))} h={fmt_float(dom.spacing)} "
        f"origin={','.join(fmt_float(o) for o in dom.origin)} components={u.components}\n"
    )
    with path.open("wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    _mask_path(path).write_bytes(dom.interior_mask.astype(np.uint8).tobytes())


def _parse_header(line: str) -> dict:
    if not line.startswith(MAGIC + " "):
        raise GridFormatError("not an EPLGRID v1 file")
    fields = {}
    for tok in line[len(MAGIC) + 1 :].split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise GridFormatError(f"malformed header field {tok!r}")
        fields[key] = val
    missing = {"dim", "extents", "h", "origin", "components"} - fields.keys()
    if missing:
        raise GridFormatError(f"header lacks {', '.join(sorted(missing))}")
    return fields


def read_grid(path: str | Path) -> GridFunction:
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise GridFormatError("missing header line")
    f = _parse_header(raw[:nl].decode("ascii"))
    dim = int(f["dim"])
    extents = tuple(int(e) for e in f["extents"].split(","))
    origin = tuple(float(o) for o in f["origin"].split(","))
    comps = int(f["components"])
    if len(extents) != dim or len(origin) != dim:
        raise GridFormatError("header dimension mismatch")
    count = int(np.prod(extents)) * comps
    body = raw[nl + 1 :]
    if len(body) != 8 * count:
        raise GridFormatError(f"expected {8 * count} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").astype(float).reshape(extents + (comps,))
    mask_bytes = np.frombuffer(_mask_path(path).read_bytes(), dtype=np.uint8)
    if mask_bytes.size != np.prod(extents) or np.any(mask_bytes > 1):
        raise GridFormatError("mask file does not match the grid")
    dom = GridDomain(dim, extents, float(f["h"]), origin, mask_bytes.reshape(extents).astype(bool))
    return GridFunction(dom, values)


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    out: dict[str, str] = {}
    for num, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"config line {num}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key in out:
            raise ValueError(f"config line {num}: duplicate key {key!r}")
        out[key] = val.strip()
    return out
