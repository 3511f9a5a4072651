"""Length-delimited record payloads carried on the bus.

A payload is a sequence of records; each record is a ``|``-separated row
of scalar fields prefixed by its byte length and a colon, e.g.
``17:det|cup|0.85|1|2``. The same flat-row shape is used by the metrics
files, so everything on the wire is greppable text.
"""

from typing import Iterable, Optional

from .errors import WireFormatError

FIELD_SEP = "|"


def _encode_field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        text = repr(value)
    else:
        text = str(value)
    if FIELD_SEP in text or "\n" in text:
        raise WireFormatError(f"field {text!r} contains reserved characters")
    return text


def encode_records(rows: Iterable[tuple]) -> bytes:
    """Serialize rows of scalars into one length-delimited payload."""
    parts = []
    for row in rows:
        body = FIELD_SEP.join(_encode_field(f) for f in row).encode("utf-8")
        parts.append(b"%d:%s" % (len(body), body))
    return b"".join(parts)


def decode_records(payload: bytes) -> list[list[str]]:
    """Parse a payload back into rows of string fields."""
    rows = []
    i = 0
    n = len(payload)
    while i < n:
        colon = payload.find(b":", i)
        if colon < 0:
            raise WireFormatError("missing length delimiter")
        try:
            length = int(payload[i:colon])
        except ValueError as exc:
            raise WireFormatError(f"bad record length near byte {i}") from exc
        start = colon + 1
        end = start + length
        if end > n:
            raise WireFormatError("record truncated")
        body = payload[start:end].decode("utf-8")
        rows.append(body.split(FIELD_SEP) if body else [""])
        i = end
    return rows


def opt_str(field: str) -> Optional[str]:
    """Empty wire field means None."""
    return field if field else None


def opt_float(field: str) -> Optional[float]:
    return float(field) if field else None
