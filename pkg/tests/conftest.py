import os
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import settings

from pamor.lti import StateSpaceSystem, ph_minimal_realization
from pamor.models import generate_msd

# reproducible property runs; set HYPOTHESIS_PROFILE=explore for fresh examples
settings.register_profile('repro', derandomize=True, deadline=None)
settings.register_profile('explore', deadline=None)
settings.load_profile(os.environ.get('HYPOTHESIS_PROFILE', 'repro'))


@pytest.fixture
def scalar():
    """``G(s) = 1 + 1/(s + 1)``."""
    return StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def msd():
    """MSD benchmark (n = 1000) with its pH minimal realization."""
    ph = generate_msd()
    red, V = ph_minimal_realization(ph)
    return {'ph': ph, 'fom': ph.to_system(), 'red': red, 'sys': red.to_system(), 'V': V}


@pytest.fixture(scope='session')
def msd_solutions(msd):
    from pamor.kyp import solution_from_X, solve_kyp_extremal

    smin, smax = solve_kyp_extremal(msd['sys'])
    return {'min': smin, 'max': smax, 'q': solution_from_X(msd['sys'], msd['red'].Q)}


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section('acceptance criteria')
        for line in sorted(lines):
            terminalreporter.write_line(line[1])


@pytest.fixture
def criterion(request):
    """Context manager reporting one PASS/FAIL line for an acceptance criterion.

    The body may append detail strings to the yielded list; any exception
    (including a failed assertion) marks the criterion as failed.
    """
    lines = request.config.stash[_CRITERIA]

    @contextmanager
    def run(number, title, extra_seconds=0.0):
        notes = []
        t0 = time.perf_counter()
        status = 'FAIL'
        try:
            yield notes
            status = 'PASS'
        except BaseException as exc:
            notes.append(f'{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ""}')
            raise
        finally:
            elapsed = time.perf_counter() - t0 + extra_seconds
            line = f'[{status}] criterion {number:>2}: {title} ({elapsed:.1f} s)'
            if notes:
                line += '\n' + '\n'.join(f'           {n}' for n in notes)
            lines.append((number, line))
            print(line)

    return run
