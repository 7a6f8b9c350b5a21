"""Command-line interface: ``pamor generate | reduce | sweep | analyze``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 file input/output error. The default output directory is taken from the
``PAMOR_OUTPUT_DIR`` environment variable (else the working directory).
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from pamor.errors import InputError, NumericalError, ParseError
from pamor.kyp import verify_kyp
from pamor.lti import hankel_singular_values
from pamor.models.io import write_csv, write_manifest, write_svg_plot
from pamor.pipeline import KIND_FREE, KINDS, METHODS, Workbench, build_builtin, expand_runs, run_one
from pamor.reducers import ReducerConfig
from pamor.spectral import hankel_ordering_check

log = logging.getLogger('pamor')

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def parse_orders(text):
    """``16``, ``4,8,12`` or ``start:step:stop`` (inclusive)."""
    try:
        if ':' in text:
            parts = [int(t) for t in text.split(':')]
            if len(parts) == 2:
                parts = [parts[0], 1, parts[1]]
            start, step, stop = parts
            if step <= 0:
                raise UsageError('range step must be positive')
            orders = list(range(start, stop + 1, step))
        else:
            orders = [int(t) for t in text.split(',') if t.strip()]
    except ValueError:
        raise UsageError(f'invalid order list {text!r}') from None
    if not orders:
        raise UsageError(f'order range {text!r} is empty')
    if min(orders) < 1:
        raise UsageError('reduced orders must be positive')
    return orders


def _choices(text, allowed, what):
    if text == 'all':
        return list(allowed)
    items = [t.strip() for t in text.split(',') if t.strip()]
    bad = [t for t in items if t not in allowed]
    if bad or not items:
        raise UsageError(f'invalid {what} {text!r}; choose from {", ".join(allowed)} or all')
    return items


def _output_dir(args):
    out = Path(args.out) if args.out else Path(os.environ.get('PAMOR_OUTPUT_DIR', '.'))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args):
    return ReducerConfig(max_iters=args.max_iters, conv_tol=args.tol, restarts=args.restarts)


def _load(args):
    return Workbench.load(args.model, minreal=not args.no_minreal, trunc_tol=args.trunc_tol,
                          epsilon=args.epsilon)


def _safe_name(text):
    return ''.join(c if c.isalnum() or c in '-_.' else '_' for c in text)


def _fmt_row(row):
    keys = ('h2_error', 'h2_rel_error', 'hinf_error', 'h2_bound_rhs', 'passivity_margin')
    parts = [f'{k}={row[k]:.4e}' for k in keys if row.get(k) is not None]
    parts += [f'{k}={row[k]}' for k in ('passive', 'stable', 'converged') if k in row]
    return ' '.join(parts)


# --- commands --------------------------------------------------------------

def cmd_generate(args):
    params = {k: v for k, v in vars(args).items() if k.startswith('p_') and v is not None}
    params = {k[2:]: v for k, v in params.items()}
    built = build_builtin(args.generator, params)
    out = _output_dir(args)
    name = args.name or args.generator
    if args.generator == 'poro':
        model = built['model']
        objects = [{'E': model.E, 'J': model.J, 'R': model.R, 'G': model.B}]
    elif built['ph'] is not None:
        objects = [built['ph']]
    else:
        objects = [built['system']]
    path = write_manifest(objects, out / f'{name}.manifest', name=name, params=built['params'])
    sysm = built['system']
    print(f'wrote {path} (n={sysm.n}, m={sysm.m}, p={sysm.p})')
    if built['ph'] is not None:
        built['ph'].check()
        print('structure: pH invariants satisfied')
    return EXIT_OK


def cmd_reduce(args):
    bench = _load(args)
    method = args.method
    kind = None if method in KIND_FREE else args.solution
    r = parse_orders(str(args.r))
    if len(r) != 1:
        raise UsageError('reduce takes a single order; use sweep for ranges')
    row, rom, extra = run_one(bench, method, kind, r[0], seed=args.seed, config=_config(args),
                              hinf=args.hinf)
    out = _output_dir(args)
    stem = _safe_name(f'{bench.name}_{method}{"_" + kind if kind else ""}_r{r[0]}')
    result = extra['result']
    objects = [rom]
    if getattr(result, 'ph', None) is not None and method == 'ph-irka':
        objects = [result.ph, rom]
    write_manifest(objects, out / f'{stem}.manifest', name=stem,
                   params={'method': method, 'solution_kind': kind or '', 'r': r[0], 'seed': args.seed})
    write_csv([row], out / f'{stem}.csv')
    print(f'{bench.name}: n={bench.fom.n} minimal={bench.sys.n} method={method} '
          f'kind={kind or "-"} r={r[0]}')
    print(_fmt_row(row))
    if 'bound_holds' in row:
        print(f'error bound {"holds" if row["bound_holds"] else "VIOLATED"}')
    print(f'wrote {out / (stem + ".manifest")}')
    if not row['stable']:
        print('reduced model is not stable', file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _sweep_job(bench, job, args, config):
    r, method, kind = job
    try:
        row, _, _ = run_one(bench, method, kind, r, seed=args.seed, config=config, hinf=args.hinf)
    except (NumericalError, InputError) as exc:
        log.warning('r=%d %s %s failed: %s', r, method, kind or '', exc)
        row = {'r': r, 'method': method, 'solution_kind': kind or '',
               'status': f'failed: {type(exc).__name__}: {exc}'}
    return row


def cmd_sweep(args):
    orders = parse_orders(args.r)
    methods = _choices(args.methods, METHODS, 'methods')
    kinds = _choices(args.solutions, KINDS, 'solution kinds')
    bench = _load(args)
    orders = [r for r in orders if r <= bench.sys.n] or orders
    jobs = expand_runs(methods, kinds, orders)
    try:
        bench.prepare(jobs)
    except NumericalError as exc:
        log.warning('shared data incomplete: %s', exc)
    config = _config(args)
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(lambda s: _sweep_job(bench, s, args, config), jobs))
    out = _output_dir(args)
    stem = _safe_name(args.name or f'{bench.name}_sweep')
    columns = ['r', 'method', 'solution_kind', 'h2_error', 'hinf_error', 'h2_bound_rhs', 'wall_time_s',
               'h2_rel_error', 'passivity_margin', 'passive', 'stable', 'kyp_margin', 'bound_holds',
               'converged', 'iterations', 'status']
    csv_path = write_csv(rows, out / f'{stem}.csv', columns)
    series = {}
    for (r, method, kind), row in zip(jobs, rows):
        label = method if kind is None else f'{method} ({kind})'
        if row.get('h2_error') is not None:
            series.setdefault(label, ([], []))
            series[label][0].append(r)
            series[label][1].append(row['h2_error'])
    svg_path = write_svg_plot(series, out / f'{stem}.svg', title=f'{bench.name}: H2 error',
                              xlabel='reduced order r', ylabel='H2 error')
    failed = sum(1 for row in rows if row['status'] != 'ok')
    print(f'{len(rows)} runs, {failed} failed; wrote {csv_path} and {svg_path}')
    return EXIT_OK


def cmd_analyze(args):
    bench = _load(args)
    kinds = _choices(args.solutions, KINDS, 'solution kinds')
    if 'q' in kinds and bench.ph is None:
        kinds.remove('q')
        log.warning('model has no pH form; skipping solution kind q')
    sols = [bench.solution(k) for k in kinds]
    print(f'{bench.name}: n={bench.fom.n} minimal={bench.sys.n}')
    ok = True
    for k, s in zip(kinds, sols):
        rep = verify_kyp(bench.sys, s)
        ok &= rep.ok
        print(f'KYP {k}: {rep.summary()}')
    fom_hsv = hankel_singular_values(bench.sys)
    ordering = hankel_ordering_check(bench.sys, sols, labels=kinds)
    out = _output_dir(args)
    stem = _safe_name(args.name or f'{bench.name}_hankel')
    rows = [{'k': k + 1, 'fom': fom_hsv[k], **{lab: ordering.values[i][k] for i, lab in enumerate(kinds)}}
            for k in range(bench.sys.n)]
    write_csv(rows, out / f'{stem}.csv', ['k', 'fom', *kinds])
    idx = np.arange(1, bench.sys.n + 1)
    series = {'full-order model': (idx, fom_hsv)}
    series.update({f'spectral factor ({k})': (idx, ordering.values[i]) for i, k in enumerate(kinds)})
    write_svg_plot(series, out / f'{stem}.svg', title=f'{bench.name}: Hankel singular values',
                   xlabel='k', ylabel='sigma_k')
    top = ', '.join(f'{k}={ordering.values[i][0]:.6g}' for i, k in enumerate(kinds))
    print(f'sigma_1: fom={fom_hsv[0]:.6g}, {top}')
    if 'min' in kinds and len(kinds) > 1:
        print(f'min-solution ordering holds: {ordering.holds} (max violation {ordering.max_violation:.2e})')
    print(f'wrote {out / (stem + ".csv")} and {out / (stem + ".svg")}')
    if not ok:
        print('KYP certification failed', file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _common(p):
    p.add_argument('model', help='manifest path or builtin model such as msd:n=1000, poro:mesh=8, random:n=10,m=2,seed=0')
    p.add_argument('--out', help='output directory (default: $PAMOR_OUTPUT_DIR or .)')
    p.add_argument('--name', help='output file stem')
    p.add_argument('--epsilon', type=float, help='Riccati feedthrough regularization (default: automatic)')
    p.add_argument('--trunc-tol', type=float, default=1e-12, help='minimal realization tolerance')
    p.add_argument('--no-minreal', action='store_true', help='skip the minimal realization step')


def _iteration(p):
    p.add_argument('--seed', type=int, default=0, help='base seed; run with order r uses seed + r')
    p.add_argument('--restarts', type=int, default=3)
    p.add_argument('--max-iters', type=int, default=200)
    p.add_argument('--tol', type=float, default=1e-6, help='IRKA convergence tolerance')
    p.add_argument('--hinf', action='store_true', help='also compute H-infinity errors')


def build_parser():
    parser = _Parser(prog='pamor', description='Passivity-preserving model reduction.')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    g = sub.add_parser('generate', help='write a benchmark model as a manifest')
    gsub = g.add_subparsers(dest='generator', required=True, parser_class=_Parser)
    for name, opts in (
        ('msd', [('--n', int), ('--masses', float), ('--stiffness', float), ('--damping', float),
                 ('--inputs', int)]),
        ('poro', [('--mesh', int), ('--mu', float), ('--lam', float), ('--rho', float),
                  ('--alpha', float), ('--inv-M', float), ('--kappa-over-nu', float), ('--eta', float)]),
        ('random', [('--n', int), ('--m', int), ('--seed', int)]),
        ('random-contractive', [('--n', int), ('--m', int), ('--seed', int)]),
    ):
        gp = gsub.add_parser(name)
        for flag, typ in opts:
            gp.add_argument(flag, type=typ, dest='p_' + flag[2:].replace('-', '_'))
        gp.add_argument('--out', help='output directory')
        gp.add_argument('--name', help='manifest stem (default: generator name)')

    r = sub.add_parser('reduce', help='reduce one model with one method')
    _common(r)
    r.add_argument('--method', choices=METHODS, default='spectral-factor')
    r.add_argument('--solution', choices=KINDS, default='min')
    r.add_argument('-r', '--r', required=True, help='reduced order')
    _iteration(r)

    s = sub.add_parser('sweep', help='error curves over a range of orders')
    _common(s)
    s.add_argument('-r', '--r', default='2:2:20', help='orders: start:step:stop, or a comma list')
    s.add_argument('--methods', default='all', help=f'comma list of {", ".join(METHODS)} or all')
    s.add_argument('--solutions', default='min', help='comma list of min, max, q or all')
    s.add_argument('--workers', type=int, default=min(4, os.cpu_count() or 1))
    _iteration(s)

    a = sub.add_parser('analyze', help='KYP certification and Hankel singular values')
    _common(a)
    a.add_argument('--solutions', default='all', help='comma list of min, max, q or all')
    return parser


COMMANDS = {'generate': cmd_generate, 'reduce': cmd_reduce, 'sweep': cmd_sweep, 'analyze': cmd_analyze}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f'pamor: error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f'pamor: I/O error: {exc}', file=sys.stderr)
        return EXIT_IO
    except InputError as exc:
        print(f'pamor: error: {exc}', file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f'pamor: numerical failure: {type(exc).__name__}: {exc}', file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
