"""Model and result serialization.

* Matrices: Matrix Market exchange format, one file per matrix (``array``
  for dense data, ``coordinate`` when at most a quarter of the entries are
  nonzero). Values are written with 17 significant digits so that a
  write/read round trip is exact.
* Manifests: UTF-8 ``key = value`` lines tying role names (``A``, ``B``,
  ``C``, ``D``, ``E``, ``J``, ``R``, ``Q``, ``G``, ``P``, ``S``, ``N``) to
  matrix files, plus ``param.<name>`` entries and ``format``/``name``.
* Tables: CSV with a header row; plots: SVG line charts.
"""

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pamor.errors import DimensionMismatch, ParseError
from pamor.lti import PhRepresentation, StateSpaceSystem

log = logging.getLogger(__name__)

__all__ = [
    'FORMAT_VERSION',
    'ModelManifest',
    'read_manifest',
    'read_mtx',
    'write_csv',
    'write_manifest',
    'write_mtx',
    'write_svg_plot',
]

FORMAT_VERSION = 'pamor-manifest-v1'
ROLES = ('A', 'B', 'C', 'D', 'E', 'J', 'R', 'Q', 'G', 'P', 'S', 'N')
PH_ROLES = ('J', 'R', 'Q', 'G', 'P', 'S', 'N')


def _fmt(x):
    return format(float(x), '.17g')


def write_mtx(path, M, *, comment=None, sparse=None):
    """Write a real matrix in Matrix Market format.

    ``sparse=None`` chooses coordinate format when at most 25% of the entries
    are nonzero.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows, cols = M.shape
    nnz = int(np.count_nonzero(M))
    if sparse is None:
        sparse = M.size > 0 and nnz <= 0.25 * M.size
    lines = []
    if sparse:
        lines.append('%%MatrixMarket matrix coordinate real general')
        if comment:
            lines.append(f'% {comment}')
        lines.append(f'{rows} {cols} {nnz}')
        ii, jj = np.nonzero(M.T)
        # column-major order for stable output
        for j, i in zip(ii, jj):
            lines.append(f'{i + 1} {j + 1} {_fmt(M[i, j])}')
    else:
        lines.append('%%MatrixMarket matrix array real general')
        if comment:
            lines.append(f'% {comment}')
        lines.append(f'{rows} {cols}')
        lines.extend(_fmt(v) for v in M.ravel(order='F'))
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def read_mtx(path):
    """Read a real Matrix Market file (array or coordinate; general,
    symmetric or skew-symmetric). Raises :class:`ParseError` with the
    offending line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ParseError(f'cannot read matrix file: {exc}', path) from exc
    lines = text.splitlines()
    if not lines:
        raise ParseError('empty file', path, 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != '%%matrixmarket' or header[1].lower() != 'matrix':
        raise ParseError('malformed Matrix Market header', path, 1)
    fmt, field_, symm = (h.lower() for h in header[2:])
    if fmt not in ('array', 'coordinate'):
        raise ParseError(f'unsupported format {fmt!r}', path, 1)
    if field_ not in ('real', 'integer', 'double'):
        raise ParseError(f'unsupported field {field_!r}', path, 1)
    if symm not in ('general', 'symmetric', 'skew-symmetric'):
        raise ParseError(f'unsupported symmetry {symm!r}', path, 1)
    body = [(k + 1, ln.strip()) for k, ln in enumerate(lines) if k > 0 and ln.strip() and not ln.lstrip().startswith('%')]
    if not body:
        raise ParseError('missing size line', path, len(lines))
    lineno, size_line = body[0]
    try:
        dims = [int(t) for t in size_line.split()]
    except ValueError:
        raise ParseError('malformed size line', path, lineno) from None
    entries = body[1:]

    def number(tok, ln):
        try:
            val = float(tok)
        except ValueError:
            raise ParseError(f'invalid number {tok!r}', path, ln) from None
        if not np.isfinite(val):
            raise ParseError(f'non-finite value {tok!r}', path, ln)
        return val

    if fmt == 'array':
        if len(dims) != 2:
            raise ParseError('array size line needs two integers', path, lineno)
        rows, cols = dims
        if symm == 'general':
            expected = rows * cols
        elif symm == 'symmetric':
            expected = cols * (cols + 1) // 2
        else:
            expected = cols * (cols - 1) // 2
        if len(entries) != expected:
            ln = entries[expected][0] if len(entries) > expected else len(lines)
            raise ParseError(f'expected {expected} entries, found {len(entries)}', path, ln)
        vals = [number(e, ln) for ln, e in entries]
        M = np.zeros((rows, cols))
        if symm == 'general':
            M[:] = np.asarray(vals).reshape(cols, rows).T
        else:
            k = 0
            for j in range(cols):
                start = j if symm == 'symmetric' else j + 1
                for i in range(start, rows):
                    M[i, j] = vals[k]
                    M[j, i] = vals[k] if symm == 'symmetric' else -vals[k]
                    k += 1
        return M

    if len(dims) != 3:
        raise ParseError('coordinate size line needs three integers', path, lineno)
    rows, cols, nnz = dims
    if len(entries) != nnz:
        raise ParseError(f'expected {nnz} entries, found {len(entries)}', path,
                         entries[nnz][0] if len(entries) > nnz else len(lines))
    M = np.zeros((rows, cols))
    for ln, e in entries:
        tok = e.split()
        if len(tok) != 3:
            raise ParseError('coordinate entry needs row, column and value', path, ln)
        try:
            i, j = int(tok[0]) - 1, int(tok[1]) - 1
        except ValueError:
            raise ParseError('invalid index', path, ln) from None
        if not (0 <= i < rows and 0 <= j < cols):
            raise ParseError(f'index ({i + 1}, {j + 1}) out of range', path, ln)
        v = number(tok[2], ln)
        M[i, j] += v
        if symm != 'general' and i != j:
            M[j, i] += v if symm == 'symmetric' else -v
    return M


@dataclass(eq=False)
class ModelManifest:
    """Parsed manifest: role-tagged matrices and parameter echo."""

    name: str
    matrices: dict
    params: dict = field(default_factory=dict)
    path: Path = None
    format: str = FORMAT_VERSION

    def has_ph(self):
        return 'J' in self.matrices and 'G' in self.matrices

    def ph(self):
        """pH representation (roles ``J``, ``R``, ``Q``, ``G``, ``P``, ``S``,
        ``N``; missing optional roles default to zero or identity)."""
        if not self.has_ph():
            raise ValueError('manifest has no pH roles J and G')
        m = self.matrices
        return PhRepresentation(m['J'], m.get('R'), m.get('Q'), m['G'], m.get('P'), m.get('S'), m.get('N'))

    def system(self):
        """State-space system; pH roles are assembled when ``A`` is absent."""
        m = self.matrices
        E = m.get('E')
        if 'A' in m:
            return StateSpaceSystem(m['A'], m['B'], m['C'], m.get('D'), E)
        if self.has_ph():
            ph = PhRepresentation(m['J'], m.get('R'), m.get('Q'), m['G'], m.get('P'), m.get('S'),
                                  m.get('N'), validate=False)
            sys = ph.to_system()
            return StateSpaceSystem(sys.A, sys.B, sys.C, sys.D, E)
        raise ValueError('manifest defines neither A nor the pH roles J, G')


def _parse_manifest_lines(path):
    entries = {}
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as exc:
        raise ParseError(f'cannot read manifest: {exc}', path) from exc
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ParseError('expected "key = value"', path, k)
        key, value = (t.strip() for t in line.split('=', 1))
        if not key:
            raise ParseError('empty key', path, k)
        if key in entries:
            raise ParseError(f'duplicate key {key!r}', path, k)
        entries[key] = (value, k)
    return entries


def _param_value(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_manifest(path):
    """Read a manifest and all referenced matrices (paths are relative to the
    manifest). A missing ``D`` defaults to zeros of the inferred size."""
    path = Path(path)
    entries = _parse_manifest_lines(path)
    fmt, ln = entries.get('format', (None, 1))
    if fmt != FORMAT_VERSION:
        raise ParseError(f'unsupported or missing format {fmt!r}', path, ln)
    mats, params = {}, {}
    for key, (value, ln) in entries.items():
        if key in ROLES:
            mats[key] = read_mtx(path.parent / value)
        elif key.startswith('param.'):
            params[key[6:]] = _param_value(value)
        elif key not in ('format', 'name'):
            raise ParseError(f'unknown key {key!r}', path, ln)
    man = ModelManifest(entries.get('name', (path.stem, 0))[0], mats, params, path, fmt)
    _validate_dimensions(man)
    return man


def _validate_dimensions(man):
    m = man.matrices
    try:
        if 'A' in m:
            if 'D' not in m:
                B, C = m['B'], m['C']
                m['D'] = np.zeros((C.shape[0], B.shape[1]))
                log.info('%s: D missing, using %dx%d zeros', man.name, *m['D'].shape)
            man.system()
        elif man.has_ph():
            man.system()
        else:
            raise DimensionMismatch('manifest needs either A, B, C or the pH roles J, G')
    except DimensionMismatch as exc:
        raise DimensionMismatch(f'{man.path}: {exc}') from exc


def _roles_of(obj):
    if isinstance(obj, dict):
        return dict(obj)
    if isinstance(obj, PhRepresentation):
        return {k: getattr(obj, k) for k in PH_ROLES}
    if isinstance(obj, StateSpaceSystem):
        roles = {'A': obj.A, 'B': obj.B, 'C': obj.C, 'D': obj.D}
        if obj.E is not None:
            roles['E'] = obj.E
        return roles
    raise TypeError(f'cannot serialize {type(obj).__name__}')


def write_manifest(objects, path, *, name=None, params=None, prefix=None):
    """Write matrices plus a manifest.

    Parameters
    ----------
    objects : StateSpaceSystem, PhRepresentation, dict, or a list of these
        Role-tagged matrices; later objects override earlier roles.
    path : path-like
        Manifest file; matrix files are written next to it as
        ``<prefix>_<role>.mtx``.

    Returns
    -------
    Path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not isinstance(objects, (list, tuple)):
        objects = [objects]
    roles = {}
    for obj in objects:
        roles.update(_roles_of(obj))
    name = name or path.stem
    prefix = prefix or path.stem
    lines = [f'format = {FORMAT_VERSION}', f'name = {name}']
    for role in ROLES:
        if role in roles and roles[role] is not None:
            fname = f'{prefix}_{role}.mtx'
            write_mtx(path.parent / fname, roles[role])
            lines.append(f'{role} = {fname}')
    for key, val in sorted((params or {}).items()):
        lines.append(f'param.{key} = {_fmt(val) if isinstance(val, float) else val}')
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


CSV_COLUMNS = ('r', 'method', 'solution_kind', 'h2_error', 'hinf_error', 'h2_bound_rhs', 'wall_time_s')


def _csv_cell(v):
    if v is None:
        return ''
    if isinstance(v, (bool, np.bool_)):
        return 'true' if v else 'false'
    if isinstance(v, (float, np.floating)):
        return '' if np.isnan(v) else format(float(v), '.10g')
    return str(v)


def write_csv(rows, path, columns=None):
    """Write dict rows with a header row (``.`` decimal point, no locale)."""
    rows = list(rows)
    if columns is None:
        columns = list(CSV_COLUMNS)
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return path


def write_svg_plot(series, path, *, logy=True, title=None, xlabel=None, ylabel=None):
    """Line plot of ``{label: (x, y)}`` as SVG (deterministic output)."""
    import matplotlib

    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({'svg.hashsalt': 'pamor', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        markers = 'osD^v<>ph*'
        for k, (label, (x, y)) in enumerate(series.items()):
            y = np.asarray(y, dtype=float)
            ax.plot(x, y, marker=markers[k % len(markers)], label=label)
        if logy:
            ax.set_yscale('log')
        if title:
            ax.set_title(title)
        if xlabel:
            ax.set_xlabel(xlabel)
        if ylabel:
            ax.set_ylabel(ylabel)
        ax.grid(True, which='both', alpha=0.3)
        if series:
            ax.legend()
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
    return path


def default_output_dir():
    return Path(os.environ.get('PAMOR_OUTPUT_DIR', '.'))
