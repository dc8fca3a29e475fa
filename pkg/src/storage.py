"""Self-describing output files: field dumps, CSV tables and text summaries."""

import csv
import io
import logging
import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pytz

from .config import FORMAT_VERSION, TIMEZONE
from .field_core import Boundary, ComplexField, RealField, SpatialGrid, inner_values

logger = logging.getLogger(__name__)

HEADER_END = b"---\n"
FIELD_KINDS = {'.cfield': ('complex', '<c16'), '.rfield': ('real', '<f8')}


def atomic_write(path: Path, data: bytes) -> Path:
    """Write to a temporary sibling, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(value: Any) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ''
    return str(value)


def _join(values: Sequence[Any]) -> str:
    return ','.join(format_value(v) for v in values)


class OutputStore:
    """Writes every artifact of a run into one directory with a common header."""

    def __init__(self, directory: Union[str, Path], config_hash: str = "-", timezone: str = TIMEZONE):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.timezone = pytz.timezone(timezone)

    def header(self) -> Dict[str, str]:
        return {
            'format_version': FORMAT_VERSION,
            'config_hash': self.config_hash,
            'created': datetime.now(self.timezone).isoformat(),
        }

    def path(self, name: str) -> Path:
        return self.directory / name

    def write_field(self, name: str, field: Union[ComplexField, RealField], t: Optional[float] = None,
                    hbar: float = 1.0) -> Path:
        """Dump a field as a '.cfield' (complex) or '.rfield' (real) file."""
        suffix = '.cfield' if isinstance(field, ComplexField) else '.rfield'
        kind, dtype = FIELD_KINDS[suffix]
        grid = field.grid
        meta = {
            'format': f'bohmflow-{suffix[1:]}',
            'kind': kind,
            'name': field.name,
            'points': _join(grid.points),
            'lower': _join(grid.lower),
            'upper': _join(grid.upper),
            'boundary': grid.boundary.value,
            'dtype': dtype,
            'order': 'C',
            'hbar': format_value(float(hbar)),
            'time': format_value(float(t)) if t is not None else '',
            'norm': format_value(float(np.sqrt(max(inner_values(field.values, field.values, grid).real, 0.0)))),
            **self.header(),
        }
        text = ''.join(f'{k}: {v}\n' for k, v in meta.items()).encode('utf-8')
        payload = np.ascontiguousarray(field.values, dtype=dtype).tobytes(order='C')
        path = atomic_write(self.path(name if name.endswith(suffix) else name + suffix), text + HEADER_END + payload)
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Comma-separated table with '#' header lines, LF line endings."""
        buffer = io.StringIO()
        for key, value in self.header().items():
            buffer.write(f'# {key}: {value}\n')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        path = atomic_write(self.path(name if name.endswith('.csv') else name + '.csv'),
                            buffer.getvalue().encode('utf-8'))
        logger.debug(f"Wrote {path}")
        return path

    def write_text(self, name: str, text: str) -> Path:
        return atomic_write(self.path(name), text.encode('utf-8'))


def _split_header(raw: bytes, path: Path) -> Tuple[Dict[str, str], bytes]:
    end = raw.find(HEADER_END)
    if end < 0:
        raise ValueError(f'{path}: missing header terminator')
    meta = {}
    for line in raw[:end].decode('utf-8').splitlines():
        key, sep, value = line.partition(':')
        if not sep:
            raise ValueError(f'{path}: malformed header line {line!r}')
        meta[key.strip()] = value.strip()
    return meta, raw[end + len(HEADER_END):]


def read_field(path: Union[str, Path]) -> Tuple[Dict[str, str], Union[ComplexField, RealField]]:
    """Load a '.cfield' / '.rfield' dump with its header."""
    path = Path(path)
    if path.suffix not in FIELD_KINDS:
        raise ValueError(f'{path}: not a field dump')
    meta, payload = _split_header(path.read_bytes(), path)
    grid = SpatialGrid(
        points=tuple(int(v) for v in meta['points'].split(',')),
        lower=tuple(float(v) for v in meta['lower'].split(',')),
        upper=tuple(float(v) for v in meta['upper'].split(',')),
        boundary=Boundary(meta['boundary']),
    )
    dtype = np.dtype(meta['dtype'])
    if len(payload) != grid.size * dtype.itemsize:
        raise ValueError(f'{path}: expected {grid.size * dtype.itemsize} data bytes, found {len(payload)}')
    values = np.frombuffer(payload, dtype=dtype).reshape(grid.shape)
    cls = ComplexField if meta['kind'] == 'complex' else RealField
    return meta, cls(grid=grid, values=values, name=meta.get('name', 'field'))


def read_csv(path: Union[str, Path]) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """Header comments, column names and raw rows of a CSV artifact."""
    path = Path(path)
    meta: Dict[str, str] = {}
    body = []
    for line in path.read_text(encoding='utf-8').splitlines():
        if line.startswith('#'):
            key, _, value = line[1:].partition(':')
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ValueError(f'{path}: empty table')
    return meta, rows[0], rows[1:]


def inspect_file(path: Union[str, Path]) -> str:
    """Human-readable header echo and summary of any artifact."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f'{path} not found')
    if path.suffix in FIELD_KINDS:
        meta, field = read_field(path)
        norm = float(np.sqrt(max(inner_values(field.values, field.values, field.grid).real, 0.0)))
        lines = [f'{k}: {v}' for k, v in meta.items()]
        lines.append(f"grid: {' x '.join(str(n) for n in field.grid.points)} ({field.grid.boundary.value})")
        lines.append(f'measured_norm: {norm!r}')
        return '\n'.join(lines) + '\n'
    if path.suffix == '.csv':
        meta, columns, rows = read_csv(path)
        lines = [f'{k}: {v}' for k, v in meta.items()]
        lines.append(f"columns: {', '.join(columns)}")
        lines.append(f'rows: {len(rows)}')
        return '\n'.join(lines) + '\n'
    raise ValueError(f'{path}: unsupported artifact type {path.suffix!r}')
