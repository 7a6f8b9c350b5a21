import csv
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pamor.errors import DimensionMismatch, ParseError
from pamor.lti import StateSpaceSystem, transfer_eval
from pamor.models import random_passive, random_stable
from pamor.models.io import (
    CSV_COLUMNS,
    read_manifest,
    read_mtx,
    write_csv,
    write_manifest,
    write_mtx,
    write_svg_plot,
)


class TestMatrixMarket:
    def test_dense_round_trip(self, tmp_path, rng):
        M = rng.standard_normal((5, 5))
        write_mtx(tmp_path / 'm.mtx', M)
        assert 'array' in (tmp_path / 'm.mtx').read_text().splitlines()[0]
        np.testing.assert_array_equal(read_mtx(tmp_path / 'm.mtx'), M)

    def test_sparse_round_trip(self, tmp_path):
        M = np.zeros((6, 4))
        M[0, 1], M[5, 3], M[2, 0] = 1 / 3, -2e-300, np.pi
        write_mtx(tmp_path / 's.mtx', M)
        assert 'coordinate' in (tmp_path / 's.mtx').read_text().splitlines()[0]
        np.testing.assert_array_equal(read_mtx(tmp_path / 's.mtx'), M)

    def test_empty_dimensions(self, tmp_path):
        write_mtx(tmp_path / 'e.mtx', np.zeros((3, 0)))
        assert read_mtx(tmp_path / 'e.mtx').shape == (3, 0)

    def test_symmetric_variants(self, tmp_path):
        (tmp_path / 'sym.mtx').write_text(
            '%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1.0\n2 1 3.0\n')
        np.testing.assert_array_equal(read_mtx(tmp_path / 'sym.mtx'), [[1, 3], [3, 0]])
        (tmp_path / 'skew.mtx').write_text(
            '%%MatrixMarket matrix array real skew-symmetric\n2 2\n5.0\n')
        np.testing.assert_array_equal(read_mtx(tmp_path / 'skew.mtx'), [[0, -5], [5, 0]])

    @pytest.mark.parametrize('text, line', [
        ('%%MatrixMarket matrix foo real general\n1 1\n1\n', 1),
        ('%%MatrixMurket matrix array real general\n1 1\n1\n', 1),
        ('%%MatrixMarket matrix array real general\n% c\n2 x\n', 3),
        ('%%MatrixMarket matrix array real general\n1 2\n1.0\nabc\n', 4),
        ('%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n', 3),
        ('%%MatrixMarket matrix array real general\n2 1\n1.0\n', 3),
        ('%%MatrixMarket matrix array real general\n1 1\nnan\n', 3),
    ])
    def test_malformed(self, tmp_path, text, line):
        p = tmp_path / 'bad.mtx'
        p.write_text(text)
        with pytest.raises(ParseError) as info:
            read_mtx(p)
        assert info.value.line == line
        assert f'bad.mtx:{line}' in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            read_mtx(tmp_path / 'nope.mtx')


@settings(max_examples=50, deadline=None)
@given(M=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_mtx_round_trip_exact(tmp_path_factory, M):
    p = tmp_path_factory.mktemp('mtx') / 'm.mtx'
    write_mtx(p, M)
    out = read_mtx(p)
    # -0.0 and 0.0 compare equal; everything else must match bit for bit
    assert np.array_equal(out, M)


class TestManifest:
    def test_system_round_trip(self, tmp_path):
        sys = random_stable(4, 2, 3, seed=1, feedthrough=True)
        path = write_manifest(sys, tmp_path / 'model.txt', params={'seed': 1, 'scale': 0.5})
        man = read_manifest(path)
        assert man.name == 'model'
        assert man.params == {'seed': 1, 'scale': 0.5}
        out = man.system()
        for name in 'ABCD':
            np.testing.assert_array_equal(getattr(out, name), getattr(sys, name))

    def test_ph_round_trip(self, tmp_path):
        ph = random_passive(5, 2, seed=3)
        man = read_manifest(write_manifest(ph, tmp_path / 'ph.txt'))
        assert man.has_ph()
        back = man.ph()
        np.testing.assert_array_equal(back.Q, ph.Q)
        s = 1 + 1j
        np.testing.assert_array_equal(transfer_eval(man.system(), s), transfer_eval(ph.to_system(), s))

    def test_missing_D_defaults_to_zero(self, tmp_path, caplog):
        write_mtx(tmp_path / 'A.mtx', -np.eye(3))
        write_mtx(tmp_path / 'B.mtx', np.ones((3, 2)))
        write_mtx(tmp_path / 'C.mtx', np.ones((1, 3)))
        (tmp_path / 'm.txt').write_text(
            'format = pamor-manifest-v1\nA = A.mtx\nB = B.mtx\nC = C.mtx\n')
        with caplog.at_level(logging.INFO, logger='pamor.models.io'):
            man = read_manifest(tmp_path / 'm.txt')
        np.testing.assert_array_equal(man.matrices['D'], np.zeros((1, 2)))
        assert 'D missing' in caplog.text

    def test_dimension_mismatch(self, tmp_path):
        write_mtx(tmp_path / 'A.mtx', -np.eye(3))
        write_mtx(tmp_path / 'B.mtx', np.ones((2, 1)))
        write_mtx(tmp_path / 'C.mtx', np.ones((1, 3)))
        (tmp_path / 'm.txt').write_text(
            'format = pamor-manifest-v1\nA = A.mtx\nB = B.mtx\nC = C.mtx\n')
        with pytest.raises(DimensionMismatch):
            read_manifest(tmp_path / 'm.txt')

    @pytest.mark.parametrize('text, line', [
        ('A = a.mtx\n', 1),
        ('format = pamor-manifest-v1\nbogus\n', 2),
        ('format = pamor-manifest-v1\nfoo = 1\n', 2),
        ('format = pamor-manifest-v1\n# c\nname = a\nname = b\n', 4),
    ])
    def test_malformed(self, tmp_path, text, line):
        (tmp_path / 'm.txt').write_text(text)
        with pytest.raises(ParseError) as info:
            read_manifest(tmp_path / 'm.txt')
        assert info.value.line == line

    def test_generalized(self, tmp_path):
        sys = StateSpaceSystem(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)), None, 2 * np.eye(2))
        man = read_manifest(write_manifest(sys, tmp_path / 'g.txt'))
        np.testing.assert_array_equal(man.system().E, 2 * np.eye(2))


class TestTables:
    def test_csv(self, tmp_path):
        rows = [{'r': 2, 'method': 'irka', 'solution_kind': '', 'h2_error': 1.5e-3,
                 'hinf_error': float('nan'), 'wall_time_s': 0.25, 'passive': True}]
        write_csv(rows, tmp_path / 't.csv')
        with open(tmp_path / 't.csv', newline='') as fh:
            data = list(csv.reader(fh))
        assert tuple(data[0][:7]) == CSV_COLUMNS and data[0][7] == 'passive'
        assert data[1] == ['2', 'irka', '', '0.0015', '', '', '0.25', 'true']

    def test_svg_deterministic(self, tmp_path):
        series = {'a': ([1, 2, 3], [1e-1, 1e-2, 1e-3]), 'b': ([1, 2, 3], [2e-1, 3e-2, 1e-4])}
        write_svg_plot(series, tmp_path / 'a.svg', title='errors', xlabel='r')
        write_svg_plot(series, tmp_path / 'b.svg', title='errors', xlabel='r')
        a, b = (tmp_path / 'a.svg').read_text(), (tmp_path / 'b.svg').read_text()
        assert a.lstrip().startswith('<?xml') and '<svg' in a
        assert a == b
