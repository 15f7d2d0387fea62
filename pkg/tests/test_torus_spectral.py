import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import direct_eval
from torus_spde.torus_spectral import (
    SpectralField,
    convolve,
    eigenvalue,
    from_physical,
    grid_points,
    heat_kernel_coeffs,
    make_lattice,
    project,
    read_snapshot,
    read_snapshots,
    semigroup_apply,
    semigroup_factors,
    to_physical,
    write_snapshot,
    write_snapshots,
)


def _l2(f):
    return math.sqrt(float(np.sum(np.abs(f.coeffs) ** 2)))


def brute_modes(N):
    return sorted((a, b) for a in range(-N, N + 1) for b in range(-N, N + 1)
                  if 0 < a * a + b * b <= N * N)


class TestLattice:
    def test_n1_modes(self):
        assert make_lattice(1).modes.tolist() == [[-1, 0], [0, -1], [0, 1], [1, 0]]

    def test_n2_has_twelve_modes(self):
        lat = make_lattice(2)
        assert lat.size == 12
        counts = {s: int(np.sum(lat.norm_sq == s)) for s in (1, 2, 4)}
        assert counts == {1: 4, 2: 4, 4: 4}

    @pytest.mark.parametrize("N", [1, 2, 3, 5, 8, 13])
    def test_matches_enumeration(self, N):
        lat = make_lattice(N)
        assert [tuple(k) for k in lat.modes.tolist()] == brute_modes(N)

    @pytest.mark.parametrize("N", [1, 4, 7])
    def test_negation_closed(self, N):
        lat = make_lattice(N)
        np.testing.assert_array_equal(lat.modes[lat.neg_index], -lat.modes)
        assert int(lat.representative.sum()) * 2 == lat.size

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            make_lattice(0)

    @pytest.mark.parametrize("N,over,M", [(1, 1, 4), (4, 2, 20), (5, 1.5, 18), (3, 1.25, 10)])
    def test_grid_size(self, N, over, M):
        assert make_lattice(N, over).M == M


class TestEigenvalue:
    def test_values(self):
        assert eigenvalue((1, 0)) == pytest.approx(39.4784176, rel=1e-8)
        assert eigenvalue((1, 1)) == pytest.approx(78.9568352, rel=1e-8)

    def test_zero_mode(self):
        with pytest.raises(ValueError):
            eigenvalue((0, 0))


class TestProject:
    def test_identity(self, rng):
        f = SpectralField.random(make_lattice(5), rng)
        assert project(f, 5) is f

    def test_truncates_single_mode(self):
        f = SpectralField.from_modes(make_lattice(4), {(3, 0): 1.0})
        g = project(f, 2)
        assert g.lattice.N == 2
        assert np.all(g.coeffs == 0)

    def test_larger_cutoff_rejected(self, rng):
        with pytest.raises(ValueError):
            project(SpectralField.random(make_lattice(3), rng), 4)

    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_contraction_and_idempotence(self, Np, seed):
        f = SpectralField.random(make_lattice(12), np.random.default_rng(seed))
        g = project(f, Np)
        assert _l2(g) <= _l2(f) + 1e-12
        np.testing.assert_array_equal(project(g, Np).coeffs, g.coeffs)
        assert g.hermitian_defect() == 0


class TestSemigroup:
    def test_zero_time(self, rng):
        f = SpectralField.random(make_lattice(6), rng)
        np.testing.assert_array_equal(semigroup_apply(f, 0.0).coeffs, f.coeffs)

    def test_single_mode_decay(self):
        lat = make_lattice(3)
        f = SpectralField.from_modes(lat, {(1, 0): 2.0 - 1.0j})
        mu = eigenvalue((1, 0))
        g = semigroup_apply(f, 1.0 / mu**2)
        i = int(lat.index_of(np.array([1, 0])))
        assert g.coeffs[i] == pytest.approx((2.0 - 1.0j) * math.exp(-1.0), rel=1e-15)

    def test_negative_time(self, rng):
        with pytest.raises(ValueError):
            semigroup_apply(SpectralField.random(make_lattice(2), rng), -1e-9)

    @given(st.floats(0, 1e-3), st.floats(0, 1e-3), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_semigroup_law(self, s, t, seed):
        f = SpectralField.random(make_lattice(6), np.random.default_rng(seed))
        a = semigroup_apply(semigroup_apply(f, s), t).coeffs
        b = semigroup_apply(f, s + t).coeffs
        assert np.linalg.norm(a - b) <= 1e-14 * np.linalg.norm(b)

    def test_strict_contraction(self, rng):
        f = SpectralField.random(make_lattice(5), rng)
        for t in (1e-8, 1e-5, 1e-2):
            assert _l2(semigroup_apply(f, t)) < _l2(f)

    def test_commutes_with_projection(self, rng):
        f = SpectralField.random(make_lattice(9), rng)
        a = project(semigroup_apply(f, 3e-6), 4).coeffs
        b = semigroup_apply(project(f, 4), 3e-6).coeffs
        np.testing.assert_array_equal(a, b)

    def test_factors_in_unit_interval(self):
        lat = make_lattice(10)
        for t in (1e-9, 1e-6, 1e-3):
            fac = semigroup_factors(lat, t)
            assert np.all((fac > 0) | (t * lat.mu**2 > 700)) and np.all(fac < 1)
        assert np.all(semigroup_factors(lat, 0.0) == 1)

    @pytest.mark.parametrize("gamma", [1, 2, 3])
    @pytest.mark.parametrize("t", [1e-6, 1e-4, 1e-2])
    def test_scalar_smoothing_bound(self, gamma, t):
        lat = make_lattice(32)
        lhs = np.exp(-t * lat.mu**2) * lat.mu ** (gamma / 2)
        rhs = (gamma / (4 * math.e)) ** (gamma / 4) * t ** (-gamma / 4)
        assert np.all(lhs <= rhs * (1 + 1e-12))


class TestKernel:
    def test_convolution_is_semigroup(self, rng):
        lat = make_lattice(7)
        f = SpectralField.random(lat, rng)
        for t in (1e-7, 1e-4):
            np.testing.assert_allclose(convolve(heat_kernel_coeffs(t, lat), f).coeffs,
                                       semigroup_apply(f, t).coeffs, rtol=1e-14, atol=0)

    def test_large_time_bound(self):
        lat = make_lattice(6)
        t = 0.01
        bound = math.exp(-t * eigenvalue((1, 0)) ** 2) * math.sqrt(lat.size)
        assert _l2(heat_kernel_coeffs(t, lat)) <= bound

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_nonpositive_time(self, t):
        with pytest.raises(ValueError):
            heat_kernel_coeffs(t, make_lattice(2))


class TestTransforms:
    def test_zero(self):
        lat = make_lattice(3)
        assert np.all(to_physical(SpectralField.zeros(lat)) == 0)
        assert np.all(from_physical(np.zeros((lat.M, lat.M)), lat).coeffs == 0)

    def test_single_mode_is_basis_function(self):
        lat = make_lattice(3)
        g = to_physical(SpectralField.from_modes(lat, {(1, 0): 1.0}))
        x1, _ = grid_points(lat.M)
        np.testing.assert_allclose(g, 2 * np.cos(2 * np.pi * x1), atol=1e-12)

    def test_matches_direct_evaluation(self, rng):
        lat = make_lattice(4)
        f = SpectralField.random(lat, rng)
        x1, x2 = grid_points(lat.M)
        d = direct_eval(f, x1, x2)
        assert np.max(np.abs(d.imag)) < 1e-12
        np.testing.assert_allclose(to_physical(f), d.real, atol=1e-12)

    def test_round_trip(self, rng):
        lat = make_lattice(6)
        f = SpectralField.random(lat, rng)
        g = to_physical(f)
        np.testing.assert_allclose(to_physical(from_physical(g, lat)), g, atol=1e-12)

    def test_parseval(self, rng):
        lat = make_lattice(8)
        f = SpectralField.random(lat, rng)
        x1, x2 = grid_points(lat.M)
        quad = float(np.mean(direct_eval(f, x1, x2).real ** 2))
        assert float(np.sum(np.abs(f.coeffs) ** 2)) == pytest.approx(quad, rel=1e-12)

    def test_mean_removed(self):
        lat = make_lattice(2)
        g = np.full((lat.M, lat.M), 3.5)
        assert np.all(from_physical(g, lat).coeffs == 0)

    def test_size_mismatch(self):
        lat = make_lattice(2)
        with pytest.raises(ValueError):
            from_physical(np.zeros((lat.M + 2, lat.M + 2)), lat)

    def test_hermitian_output(self, rng):
        lat = make_lattice(5)
        g = rng.standard_normal((lat.M, lat.M))
        assert from_physical(g, lat).hermitian_defect() < 1e-15


class TestSnapshots:
    def test_layout(self):
        lat = make_lattice(1)
        f = SpectralField.from_modes(lat, {(1, 0): 0.5 + 0.25j})
        buf = io.BytesIO()
        write_snapshot(f, buf)
        raw = buf.getvalue()
        assert raw[:5] == b"SPDE1"
        assert int.from_bytes(raw[5:9], "little") == 1
        assert int.from_bytes(raw[9:13], "little") == lat.M
        assert int.from_bytes(raw[13:21], "little") == 4
        assert len(raw) == 21 + 4 * 16
        body = np.frombuffer(raw[21:], dtype="<f8").reshape(4, 2)
        # lexicographic order: (-1,0), (0,-1), (0,1), (1,0)
        np.testing.assert_array_equal(body[0], [0.5, -0.25])
        np.testing.assert_array_equal(body[3], [0.5, 0.25])

    def test_round_trip(self, rng, tmp_path):
        f = SpectralField.random(make_lattice(5, 1.5), rng)
        p = tmp_path / "f.spde"
        write_snapshot(f, p)
        g = read_snapshot(p)
        assert (g.lattice.N, g.lattice.M) == (5, f.lattice.M)
        np.testing.assert_array_equal(g.coeffs, f.coeffs)

    def test_multi_record(self, rng, tmp_path):
        lat = make_lattice(3)
        fs = [SpectralField.random(lat, rng) for _ in range(3)]
        write_snapshots(fs, tmp_path / "m.spde")
        back = read_snapshots(tmp_path / "m.spde")
        assert len(back) == 3
        for a, b in zip(fs, back):
            np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            read_snapshot(io.BytesIO(b"XXXXX" + bytes(16)))
