"""Read and write the plain-text interchange formats.

Every stage of the CLI talks to the next one through files:

- edge lists: header ``N E simple|multi``, then ``u v`` (or ``u v mult``) per line
- partitions: one cluster label per line
- embeddings: header ``N r``, then r decimals per vertex, repr() precision
- reports: JSON with sorted keys

Blank lines and lines starting with ``#`` are skipped. Malformed input raises
FormatErrorWithHint naming the offending line.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np

from .errors import FormatErrorWithHint, RobustSbmError
from .paths import ensure_dir
from .sbm import Graph, Partition
from .sdp import Embedding

PathLike = Union[str, Path]


def _content_lines(text: str) -> List[Tuple[int, List[str]]]:
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        out.append((i, s.split()))
    return out


def _write_text(path: PathLike, text: str) -> Path:
    p = Path(path)
    ensure_dir(p.parent)
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return p


def _int_token(tok: str, line: int, what: str, path: Optional[PathLike]) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatErrorWithHint(f"{what} must be an integer, got {tok!r}", line=line, path=path) from None


# ---------- edge lists ----------

def validate_edge_list_header(tokens: List[str]) -> Tuple[bool, Optional[str]]:
    if len(tokens) != 3:
        return False, "header must read 'N E simple|multi'"
    if tokens[2] not in ("simple", "multi"):
        return False, f"graph kind must be 'simple' or 'multi', got {tokens[2]!r}"
    for t in tokens[:2]:
        if not t.isdigit():
            return False, f"expected a nonnegative integer, got {t!r}"
    if int(tokens[0]) < 1:
        return False, "vertex count must be positive"
    return True, None


def parse_edge_list(text: str, path: Optional[PathLike] = None) -> Graph:
    """
    ``N E simple|multi`` header, then E pair lines. In a multigraph a line may
    carry a multiplicity and a pair may repeat; repeats add up.
    """
    lines = _content_lines(text)
    if not lines:
        raise FormatErrorWithHint("empty edge list (missing 'N E simple|multi' header)", path=path)
    header_line, header = lines[0]
    ok, reason = validate_edge_list_header(header)
    if not ok:
        raise FormatErrorWithHint(reason or "bad header", line=header_line, path=path)

    N, E, kind = int(header[0]), int(header[1]), header[2]
    simple = kind == "simple"
    body = lines[1:]
    if len(body) != E:
        raise FormatErrorWithHint(
            f"header announces {E} edge lines but {len(body)} follow", line=header_line, path=path
        )

    edges = np.zeros((E, 2), dtype=np.int64)
    mult = np.ones(E, dtype=np.int64)
    seen = set()
    for row, (i, toks) in enumerate(body):
        if len(toks) not in (2, 3) or (simple and len(toks) == 3 and toks[2] != "1"):
            raise FormatErrorWithHint("expected 'u v' (or 'u v mult' in a multigraph)", line=i, path=path)
        u = _int_token(toks[0], i, "endpoint", path)
        v = _int_token(toks[1], i, "endpoint", path)
        if not (0 <= u < N and 0 <= v < N):
            raise FormatErrorWithHint(f"endpoint out of range [0, {N})", line=i, path=path)
        if u == v:
            raise FormatErrorWithHint(f"self-loop at vertex {u}", line=i, path=path)
        key = (min(u, v), max(u, v))
        if simple and key in seen:
            raise FormatErrorWithHint(f"pair {key[0]} {key[1]} listed twice", line=i, path=path)
        seen.add(key)
        if len(toks) == 3:
            mult[row] = _int_token(toks[2], i, "multiplicity", path)
            if mult[row] < 1:
                raise FormatErrorWithHint("multiplicity must be at least 1", line=i, path=path)
        edges[row] = key
    try:
        return Graph.from_edges(N, edges, mult, simple=simple)
    except RobustSbmError as e:
        raise FormatErrorWithHint(str(e), path=path) from e


def format_edge_list(g: Graph) -> str:
    kind = "simple" if g.simple else "multi"
    out = [f"{g.vertex_count} {g.pair_count} {kind}"]
    if g.simple:
        out.extend(f"{u} {v}" for u, v in g.pairs.tolist())
    else:
        out.extend(f"{u} {v} {c}" for (u, v), c in zip(g.pairs.tolist(), g.multiplicity.tolist()))
    return "\n".join(out) + "\n"


def read_edge_list(path: PathLike) -> Graph:
    p = Path(path)
    return parse_edge_list(p.read_text(encoding="utf-8"), path=p)


def write_edge_list(g: Graph, path: PathLike) -> Path:
    return _write_text(path, format_edge_list(g))


# ---------- partitions ----------

def parse_partition(
    text: str, k: Optional[int] = None, balanced: Optional[bool] = None, path: Optional[PathLike] = None
) -> Partition:
    """
    One label per line. k defaults to max label + 1; balanced defaults to
    "all cluster sizes equal".
    """
    labels = []
    for i, toks in _content_lines(text):
        if len(toks) != 1:
            raise FormatErrorWithHint("expected exactly one label", line=i, path=path)
        lab = _int_token(toks[0], i, "label", path)
        if lab < 0 or (k is not None and lab >= k):
            raise FormatErrorWithHint(f"label {lab} out of range", line=i, path=path)
        labels.append(lab)
    if not labels:
        raise FormatErrorWithHint("partition file has no labels", path=path)
    arr = np.asarray(labels, dtype=np.int64)
    kk = int(k) if k is not None else int(arr.max()) + 1
    if balanced is None:
        sizes = np.bincount(arr, minlength=kk)
        balanced = bool(np.all(sizes == sizes[0]))
    try:
        return Partition(arr, kk, balanced=balanced)
    except RobustSbmError as e:
        raise FormatErrorWithHint(str(e), path=path) from e


def read_partition(path: PathLike, k: Optional[int] = None, balanced: Optional[bool] = None) -> Partition:
    p = Path(path)
    return parse_partition(p.read_text(encoding="utf-8"), k=k, balanced=balanced, path=p)


def write_partition(p: Partition, path: PathLike) -> Path:
    return _write_text(path, "".join(f"{lab}\n" for lab in p.labels.tolist()))


# ---------- embeddings ----------

def parse_embedding(text: str, path: Optional[PathLike] = None) -> Embedding:
    lines = _content_lines(text)
    if not lines:
        raise FormatErrorWithHint("empty embedding file (missing 'N r' header)", path=path)
    header_line, header = lines[0]
    if len(header) != 2 or not all(t.isdigit() for t in header):
        raise FormatErrorWithHint("header must read 'N r'", line=header_line, path=path)
    N, r = int(header[0]), int(header[1])
    if N < 1 or r < 1:
        raise FormatErrorWithHint("N and r must be positive", line=header_line, path=path)
    body = lines[1:]
    if len(body) != N:
        raise FormatErrorWithHint(f"expected {N} vector rows, found {len(body)}", line=header_line, path=path)
    X = np.zeros((N, r), dtype=np.float64)
    for row, (i, toks) in enumerate(body):
        if len(toks) != r:
            raise FormatErrorWithHint(f"expected {r} values, found {len(toks)}", line=i, path=path)
        try:
            X[row] = [float(t) for t in toks]
        except ValueError:
            raise FormatErrorWithHint("non-numeric vector entry", line=i, path=path) from None
        if not np.all(np.isfinite(X[row])):
            raise FormatErrorWithHint("non-finite vector entry", line=i, path=path)
    return Embedding(X)


def format_embedding(e: Embedding) -> str:
    # repr() gives the shortest string that parses back to the same double
    rows = [" ".join(repr(float(x)) for x in row) for row in e.vectors.tolist()]
    return f"{e.vertex_count} {e.dimension}\n" + "".join(r + "\n" for r in rows)


def read_embedding(path: PathLike) -> Embedding:
    p = Path(path)
    return parse_embedding(p.read_text(encoding="utf-8"), path=p)


def write_embedding(e: Embedding, path: PathLike) -> Path:
    return _write_text(path, format_embedding(e))


# ---------- JSON reports ----------

def to_jsonable(obj: Any) -> Any:
    """numpy scalars/arrays to plain Python; NaN and infinities to None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_report(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(obj: Any, path: PathLike) -> Path:
    return _write_text(path, dumps_report(obj))


def read_json(path: PathLike) -> Any:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatErrorWithHint(f"invalid JSON: {e.msg}", line=e.lineno, path=p) from None
