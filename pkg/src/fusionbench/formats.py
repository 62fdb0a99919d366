"""Plain-text tensor container and CSV helpers.

Container layout (one record per line, whitespace separated)::

    fusionbench-tensors <version>
    meta <key> <value...>
    tensor <name> <ndim> <dim_1> ... <dim_ndim>
    <prod(dims) float64 values in row-major order, shortest round-trip repr>
    sketch <name>
    <n> <d> <seed>
    <s_1> ... <s_n>
    <h_1> ... <h_n>
    end

``meta``, ``tensor`` and ``sketch`` records may appear in any order and any
number; ``end`` is mandatory so truncation is always detected.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, VersionError
from .sketch import SketchSpec

MAGIC = "fusionbench-tensors"
VERSION = 1


@dataclass
class Container:
    meta: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)
    sketches: dict = field(default_factory=dict)


def _fmt_values(arr):
    return " ".join(map(repr, np.asarray(arr, dtype=np.float64).ravel().tolist()))


def dumps(container):
    out = [f"{MAGIC} {VERSION}"]
    for key, value in container.meta.items():
        if any(c.isspace() for c in key) or "\n" in str(value):
            raise ValueError(f"meta key/value not representable: {key!r}={value!r}")
        out.append(f"meta {key} {value}")
    for name, arr in container.tensors.items():
        arr = np.asarray(arr)
        out.append(f"tensor {name} {arr.ndim} {' '.join(str(s) for s in arr.shape)}".rstrip())
        out.append(_fmt_values(arr))
    for name, spec in container.sketches.items():
        out.append(f"sketch {name}")
        out.append(spec.to_text().rstrip("\n"))
    out.append("end")
    return "\n".join(out) + "\n"


def loads(text, path=None):
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty file", line=1, path=path)
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise FormatError(f"expected '{MAGIC} <version>' header", line=1, path=path)
    try:
        version = int(head[1])
    except ValueError:
        raise FormatError("version must be an integer", line=1, path=path) from None
    if version != VERSION:
        raise VersionError(f"{path or 'input'}: format version {version} is not supported (expected {VERSION})")

    c = Container()
    i = 1
    while i < len(lines):
        lineno = i + 1
        parts = lines[i].split()
        if not parts:
            raise FormatError("blank line", line=lineno, path=path)
        tag = parts[0]
        if tag == "end":
            if i != len(lines) - 1:
                raise FormatError("content after 'end'", line=lineno + 1, path=path)
            return c
        if tag == "meta":
            if len(parts) < 2:
                raise FormatError("meta record needs a key", line=lineno, path=path)
            c.meta[parts[1]] = lines[i].split(None, 2)[2] if len(parts) > 2 else ""
            i += 1
        elif tag == "tensor":
            try:
                name, ndim = parts[1], int(parts[2])
                shape = tuple(int(s) for s in parts[3:])
            except (IndexError, ValueError):
                raise FormatError("tensor header must be 'tensor <name> <ndim> <dims...>'", line=lineno, path=path) from None
            if len(shape) != ndim or any(s < 0 for s in shape):
                raise FormatError(f"tensor {name}: ndim {ndim} does not match dims {shape}", line=lineno, path=path)
            if i + 1 >= len(lines):
                raise FormatError(f"tensor {name}: missing values line", line=lineno + 1, path=path)
            toks = lines[i + 1].split()
            size = int(np.prod(shape, dtype=np.int64))
            if len(toks) != size:
                raise FormatError(f"tensor {name}: expected {size} values, got {len(toks)}", line=lineno + 1, path=path)
            try:
                values = np.array(toks, dtype=np.float64)
            except ValueError:
                raise FormatError(f"tensor {name}: non-numeric value", line=lineno + 1, path=path) from None
            c.tensors[name] = values.reshape(shape)
            i += 2
        elif tag == "sketch":
            if len(parts) != 2:
                raise FormatError("sketch header must be 'sketch <name>'", line=lineno, path=path)
            c.sketches[parts[1]] = SketchSpec.from_lines(lines[i + 1:i + 4], first_lineno=lineno + 1, path=path)
            i += 4
        else:
            raise FormatError(f"unknown record {tag!r}", line=lineno, path=path)
    raise FormatError("missing 'end' record (file truncated?)", line=len(lines) + 1, path=path)


def save(container, path):
    with open(path, "w") as f:
        f.write(dumps(container))


def load(path):
    with open(path) as f:
        return loads(f.read(), path=str(path))


def format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(csv_text(header, rows))


def parse_csv(text):
    """Return ``(header, rows)``; cells that parse as int or float are converted."""
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows:
        raise FormatError("empty CSV", line=1)
    return rows[0], [[_convert(c) for c in r] for r in rows[1:]]


def read_csv(path):
    with open(path, newline="") as f:
        return parse_csv(f.read())


def _convert(cell):
    for cast in (int, float):
        try:
            return cast(cell)
        except ValueError:
            pass
    return cell
