import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from torus_spde.nonlinearity import (
    NonFiniteStateError,
    NonlinearitySpec,
    catalogue,
    eval_G,
    lipschitz_bound,
)
from torus_spde.torus_spectral import SpectralField, lattice_with_grid, make_lattice, to_physical


def _l2(c):
    return math.sqrt(float(np.sum(np.abs(c) ** 2)))


def dense_coefficients(spec, f, factor=4):
    """Project G(u) by a midpoint rule on a grid ``factor`` times finer, no FFT."""
    m = factor * f.lattice.M
    x = np.arange(m) / m
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    u = np.zeros_like(x1)
    for (k1, k2), c in zip(f.lattice.modes, f.coeffs):
        u += (c * np.exp(2j * np.pi * (k1 * x1 + k2 * x2))).real
    g = spec.pointwise()(u)
    return np.array([np.mean(g * np.exp(-2j * np.pi * (k1 * x1 + k2 * x2)))
                     for k1, k2 in f.lattice.modes])


class TestSpec:
    @pytest.mark.parametrize("text,kind,params", [
        ("zero", "zero", ()),
        ("sine(2)", "sine", (2.0,)),
        (" tanh( 1.5 ) ", "tanh", (1.5,)),
        ("rational", "rational", ()),
        ("constant(-0.3)", "constant", (-0.3,)),
    ])
    def test_parse(self, text, kind, params):
        s = NonlinearitySpec.parse(text)
        assert (s.kind, s.params) == (kind, params)
        assert NonlinearitySpec.parse(str(s)) == s
        assert NonlinearitySpec.parse(s.to_config()) == s

    def test_parse_list(self):
        assert NonlinearitySpec.parse(["sine", 3]) == NonlinearitySpec.sine(3)

    @pytest.mark.parametrize("bad", ["cubic", "sine", "sine(1, 2)", "rational(1)", "sine(1"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            NonlinearitySpec.parse(bad)

    def test_sup_norms(self):
        u = np.linspace(-50, 50, 400_001)
        for spec in catalogue():
            assert np.max(np.abs(spec.pointwise()(u))) <= spec.sup_norm() + 1e-15

    def test_lipschitz_bounds(self):
        u = np.linspace(-20, 20, 2_000_001)
        for spec in catalogue():
            g = spec.pointwise()(u)
            slope = np.max(np.abs(np.diff(g) / np.diff(u)))
            assert slope <= lipschitz_bound(spec) + 1e-9
            assert slope >= lipschitz_bound(spec) - 1e-4

    def test_rational_bound_is_one(self):
        assert lipschitz_bound(NonlinearitySpec.rational()) == 1.0


class TestEval:
    @pytest.mark.parametrize("spec", [NonlinearitySpec.zero(), NonlinearitySpec.constant(2.5)])
    def test_trivial_kinds_vanish(self, spec, rng):
        f = SpectralField.random(make_lattice(6), rng)
        assert np.all(eval_G(spec, f).coeffs == 0)

    def test_sine_small_amplitude(self):
        lat = make_lattice(4)
        f = SpectralField.from_modes(lat, {(1, 0): 1e-3})
        spec = NonlinearitySpec.sine(1.0)
        got = eval_G(spec, f).coeffs
        ref = dense_coefficients(spec, f)
        assert _l2(got - ref) <= 1e-8 * _l2(ref)
        # sin(a cos t) has first Fourier coefficient J_1(a)
        i = int(lat.index_of(np.array([1, 0])))
        assert got[i].real == pytest.approx(special.jv(1, 2e-3), rel=1e-12)

    @pytest.mark.parametrize("spec", catalogue()[2:], ids=str)
    def test_fft_matches_direct_sums(self, spec, rng):
        # same collocation grid, transforms replaced by explicit exponential sums
        fine = lattice_with_grid(3, 4 * make_lattice(3).M)
        f = SpectralField.random(fine, rng, 0.3)
        got = eval_G(spec, f).coeffs
        ref = dense_coefficients(spec, f, factor=1)
        assert _l2(got - ref) <= 1e-12 * _l2(ref)

    @pytest.mark.parametrize("spec", catalogue()[2:], ids=str)
    def test_aliasing_shrinks_with_oversampling(self, spec, rng):
        coeffs = SpectralField.random(make_lattice(3), rng, 0.3).coeffs
        errs = []
        for over in (1, 2, 4):
            f = SpectralField(make_lattice(3, over), coeffs)
            errs.append(_l2(eval_G(spec, f).coeffs - dense_coefficients(spec, f, factor=16 // over)))
        assert errs[0] > errs[1] > errs[2]

    @pytest.mark.parametrize("spec", catalogue(), ids=str)
    def test_bounded_by_sup_norm(self, spec, rng):
        f = SpectralField.random(make_lattice(8), rng, 5.0)
        g = eval_G(spec, f)
        assert _l2(g.coeffs) <= spec.sup_norm() + 1e-12
        assert g.hermitian_defect() < 1e-15

    def test_mean_zero_frame(self, rng):
        # G(u) generally has a nonzero mean; the frame drops it
        lat = make_lattice(4)
        f = SpectralField.random(lat, rng, 2.0)
        spec = NonlinearitySpec.constant(1.0)
        assert np.all(eval_G(spec, f).coeffs == 0)
        g = to_physical(eval_G(NonlinearitySpec.tanh(1.0), f))
        assert abs(float(np.mean(g))) < 1e-14

    @given(st.integers(0, 2**32 - 1), st.sampled_from([s for s in catalogue() if s.kind not in ("zero",)]))
    @settings(max_examples=30, deadline=None)
    def test_lipschitz_in_state(self, seed, spec):
        r = np.random.default_rng(seed)
        lat = make_lattice(5)
        u = SpectralField.random(lat, r, 1.0)
        v = SpectralField.random(lat, r, 1.0)
        d = _l2(eval_G(spec, u).coeffs - eval_G(spec, v).coeffs)
        assert d <= lipschitz_bound(spec) * _l2(u.coeffs - v.coeffs) * (1 + 1e-6) + 1e-12

    def test_non_finite_raises(self):
        lat = make_lattice(2)
        f = SpectralField.from_modes(lat, {(1, 0): np.inf})
        with pytest.raises(NonFiniteStateError):
            eval_G(NonlinearitySpec.sine(1.0), f)
