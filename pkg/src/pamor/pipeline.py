"""Experiment pipeline shared by the command-line interface.

A model is loaded once (builtin generator or manifest), truncated to a
numerically minimal realization, and its Riccati solutions and error
evaluators are computed once. Individual runs (method, solution kind, order)
then only read this shared data, so they can execute concurrently.
"""

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pamor.errors import InvalidConfig, NumericalError
from pamor.kyp import solution_from_X, solve_kyp_extremal, spectral_factor_system
from pamor.lti import (
    H2ErrorEvaluator,
    PhRepresentation,
    StateSpaceSystem,
    _standard,
    generalized_to_standard,
    hinf_norm,
    is_passive_sampled,
    is_stable,
    minimal_realization,
    ph_minimal_realization,
)
from pamor.models import (
    MsdConfig,
    PoroConfig,
    generate_msd,
    generate_poro,
    random_contractive,
    random_passive,
)
from pamor.models.io import read_manifest
from pamor.reducers import ReducerConfig, irka, ph_irka, ph_irka_kyp, prbt
from pamor.spectral import h2_bound, reduce_passive, regularized

log = logging.getLogger(__name__)

METHODS = ('spectral-factor', 'irka', 'ph-irka', 'prbt')
KINDS = ('min', 'max', 'q')
# methods whose result does not depend on the solution kind
KIND_FREE = ('irka', 'prbt')
BUILTINS = ('msd', 'poro', 'random', 'random-passive', 'random-contractive')


def _convert(value):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def parse_builtin(source):
    """Split ``name:key=value,key=value`` into ``(name, dict)``."""
    name, _, rest = source.partition(':')
    params = {}
    for item in filter(None, (t.strip() for t in rest.split(','))):
        key, sep, value = item.partition('=')
        if not sep:
            raise InvalidConfig(f'expected key=value in model source, got {item!r}')
        params[key.strip().replace('-', '_')] = _convert(value.strip())
    return name, params


def _make_config(cls, params, aliases=None):
    aliases = aliases or {}
    kwargs = {aliases.get(k, k): v for k, v in params.items()}
    try:
        cfg = cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f'invalid parameters for {cls.__name__}: {exc}') from None
    cfg.validate()
    return cfg


def build_builtin(name, params):
    """Generate a builtin model.

    Returns
    -------
    dict
        ``ph`` (PhRepresentation or None), ``system`` (StateSpaceSystem, may
        carry ``E``) and ``params`` (echo for manifests).
    """
    if name == 'msd':
        cfg = _make_config(MsdConfig, params)
        ph = generate_msd(cfg)
        return {'ph': ph, 'system': ph.to_system(), 'params': vars(cfg)}
    if name == 'poro':
        cfg = _make_config(PoroConfig, params, {'mesh': 'mesh_divisions'})
        model = generate_poro(cfg)
        out = {'ph': model.to_ph(), 'system': model.system, 'model': model,
               'params': dict(vars(cfg), n=model.n)}
        return out
    if name in ('random', 'random-passive'):
        n, m, seed = int(params.get('n', 10)), int(params.get('m', 2)), int(params.get('seed', 0))
        ph = random_passive(n, m, seed=seed)
        return {'ph': ph, 'system': ph.to_system(), 'params': {'n': n, 'm': m, 'seed': seed}}
    if name == 'random-contractive':
        n, m, seed = int(params.get('n', 10)), int(params.get('m', 2)), int(params.get('seed', 0))
        sys = random_contractive(n, m, seed=seed)
        return {'ph': None, 'system': sys, 'params': {'n': n, 'm': m, 'seed': seed}}
    raise InvalidConfig(f'unknown builtin model {name!r}; choose msd, poro, random, random-contractive')


def _load_source(source):
    path = Path(source)
    if path.exists() or source.partition(':')[0] not in BUILTINS:
        man = read_manifest(path)
        sys = man.system()
        ph = None
        if man.has_ph():
            ph = man.ph()
            if sys.E is not None:
                if 'Q' in man.matrices and not np.allclose(man.matrices['Q'], np.eye(sys.n)):
                    ph = None
                else:
                    # E x' = (J - R) x + G u becomes pH with Q = E^{-1} in z = E x
                    _, Einv = generalized_to_standard(sys)
                    ph = PhRepresentation(ph.J, ph.R, Einv, ph.G, ph.P, ph.S, ph.N)
        return man.name, ph, sys
    name, params = parse_builtin(source)
    built = build_builtin(name, params)
    return source, built['ph'], built['system']


@dataclass(eq=False)
class Workbench:
    """Loaded model with its minimal realization and cached certificates.

    Attributes
    ----------
    fom : StateSpaceSystem
        Full-order model in standard form (errors are measured against it).
    sys : StateSpaceSystem
        Numerically minimal realization used by all reducers.
    ph : PhRepresentation or None
        pH form of ``sys`` (Hamiltonian ``Q``), when the model has one.
    """

    name: str
    fom: StateSpaceSystem
    sys: StateSpaceSystem
    ph: PhRepresentation = None
    epsilon: float = None
    _solutions: dict = field(default_factory=dict, repr=False)
    _evaluators: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def load(cls, source, *, minreal=True, trunc_tol=1e-12, epsilon=None):
        """Load a builtin model string (``msd:n=1000``) or a manifest path."""
        name, ph, sys = _load_source(source)
        fom = generalized_to_standard(sys)[0] if sys.E is not None else _standard(sys)
        if ph is not None:
            fom = ph.to_system()
        if not minreal:
            red_sys, red_ph = fom, ph
        elif ph is not None:
            red_ph, _ = ph_minimal_realization(ph, trunc_tol)
            red_sys = red_ph.to_system()
        else:
            red_ph, red_sys = None, minimal_realization(fom, trunc_tol)
        log.info('%s: n = %d, minimal realization r = %d', name, fom.n, red_sys.n)
        if not is_stable(red_sys):
            raise NumericalError('model is not asymptotically stable')
        return cls(name, fom, red_sys, red_ph, epsilon)

    def solution(self, kind):
        """KYP solution of the minimal realization (``min``, ``max`` or ``q``)."""
        if kind not in KINDS:
            raise InvalidConfig(f'unknown solution kind {kind!r}')
        with self._lock:
            if kind not in self._solutions:
                if kind == 'q':
                    if self.ph is None:
                        raise InvalidConfig('solution kind q needs a pH model')
                    self._solutions['q'] = solution_from_X(self.sys, self.ph.Q)
                else:
                    smin, smax = solve_kyp_extremal(self.sys, self.epsilon)
                    self._solutions.update(min=smin, max=smax)
            return self._solutions[kind]

    def evaluator(self, epsilon=0.0, *, minimal=False):
        """Cached H2 error evaluator against the (regularized) FOM."""
        key = (float(epsilon), minimal)
        with self._lock:
            if key not in self._evaluators:
                base = self.sys if minimal else self.fom
                self._evaluators[key] = H2ErrorEvaluator(regularized(base, epsilon))
            return self._evaluators[key]

    def run_epsilon(self, method, kind):
        """Feedthrough shift ``epsilon/2`` carried by the ROM of a run."""
        if method in KIND_FREE or kind == 'q':
            return 0.0
        return self.solution(kind).epsilon

    def prepare(self, runs):
        """Compute all shared data for ``(r, method, kind)`` runs up front."""
        for _, method, kind in runs:
            if method == 'prbt':
                self.solution('min')
                self.solution('max')
            elif kind is not None:
                self.solution(kind)
            eps = self.run_epsilon(method, kind)
            self.evaluator(eps)
            if method == 'spectral-factor':
                self.evaluator(eps, minimal=True)


def expand_runs(methods, kinds, orders):
    """Expand a run matrix; kind-free methods appear once per order."""
    rows = []
    for r in orders:
        for method in methods:
            for kind in (None,) if method in KIND_FREE else kinds:
                rows.append((r, method, kind))
    return rows


def _error_system(sys, rom):
    sys, rom = _standard(sys), _standard(rom)
    A = np.block([[sys.A, np.zeros((sys.n, rom.n))], [np.zeros((rom.n, sys.n)), rom.A]])
    return StateSpaceSystem(A, np.vstack([sys.B, rom.B]), np.hstack([sys.C, -rom.C]), sys.D - rom.D)


def run_one(bench, method, kind, r, *, seed=0, config=None, hinf=False, grid=None):
    """Reduce with one method and evaluate.

    Returns
    -------
    row : dict
        CSV row (errors against the full-order model).
    rom : StateSpaceSystem
    extra : dict
        Method-specific objects (bundle, reduction result).
    """
    if method not in METHODS:
        raise InvalidConfig(f'unknown method {method!r}; choose from {", ".join(METHODS)}')
    if method in KIND_FREE:
        kind = None
    elif kind is None:
        raise InvalidConfig(f'method {method} needs a solution kind')
    if not 0 < r <= bench.sys.n:
        raise InvalidConfig(f'order r = {r} outside 1..{bench.sys.n} (minimal realization)')
    base = config or ReducerConfig()
    cfg = ReducerConfig(base.max_iters, base.conv_tol, base.restarts, seed + r, base.stability_retry)
    row = {'r': r, 'method': method, 'solution_kind': kind or ''}
    t0 = time.perf_counter()
    extra = {}
    eps = bench.run_epsilon(method, kind)
    if method == 'spectral-factor':
        sol = bench.solution(kind)
        bundle = reduce_passive(bench.sys, sol, r, 'irka', cfg)
        rom = bundle.rom
        extra['bundle'] = bundle
        result = bundle.inner
        row['kyp_margin'] = bundle.info['kyp_margin']
    elif method == 'irka':
        result = irka(bench.sys, r, cfg)
        rom = result.rom
    elif method == 'ph-irka':
        if kind == 'q':
            if bench.ph is None:
                raise InvalidConfig('ph-irka with kind q needs a pH model')
            result = ph_irka(bench.ph, r, cfg)
        else:
            sol = bench.solution(kind)
            result = ph_irka_kyp(regularized(bench.sys, eps), sol.X, r, cfg)
        rom = result.rom
    else:
        result = prbt(bench.sys, r, solutions=(bench.solution('min'), bench.solution('max')))
        rom = result.rom
    row['wall_time_s'] = time.perf_counter() - t0
    extra['result'] = result
    ev = bench.evaluator(eps)
    err = ev(rom)
    row['h2_error'] = err
    row['h2_rel_error'] = err / ev.norm if ev.norm > 0 else np.nan
    if method == 'spectral-factor':
        H = spectral_factor_system(bench.sys, sol)
        err_min = bench.evaluator(eps, minimal=True)(rom)
        _, rhs, holds = h2_bound(H, bundle.rom_spectral, err_min)
        row['h2_bound_rhs'] = rhs
        row['bound_holds'] = holds
    if hinf:
        row['hinf_error'] = hinf_norm(_error_system(regularized(bench.fom, eps), rom))
    passive, margin, _ = is_passive_sampled(rom, grid)
    row['passivity_margin'] = margin
    row['passive'] = passive
    row['stable'] = is_stable(rom)
    row['converged'] = bool(result.converged)
    row['iterations'] = result.iterations
    row['status'] = 'ok'
    return row, rom, extra

