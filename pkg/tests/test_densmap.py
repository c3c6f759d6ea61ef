"""Monte Carlo density estimation and the fitted a(kappa) map."""

import numpy as np
import pytest

from latticeopt.beam_rve import RveModel
from latticeopt.densmap import (
    DensitySample,
    SigmoidFit,
    aspect_from_density,
    estimate_density,
    fit_sigmoid,
    naive_density,
)

PAPER_FIT = SigmoidFit(0.11882, 0.91991, 0.05956)


def synthetic_rve(nodes, struts, L=4.0, l=1.0):
    nodes = np.asarray(nodes, dtype=float)
    struts = np.asarray(struts, dtype=int)
    return RveModel(
        size=L,
        strut_length=l,
        nodes=nodes,
        struts=struts,
        weights=np.ones(len(struts)),
        pairs=np.zeros((0, 2), dtype=int),
        n_base=len(nodes),
        seed=0,
        cell_count=1,
        max_length_deviation=0.0,
    )


def capsule_volume(length, radius):
    return np.pi * radius**2 * length + 4.0 / 3.0 * np.pi * radius**3


class TestEstimateDensity:
    def test_single_strut_matches_capsule(self):
        # one interior strut: material region is a capsule of radius d/2
        rve = synthetic_rve([[1.5, 2.0, 2.0], [2.5, 2.0, 2.0]], [[0, 1]])
        a = 0.3
        exact = capsule_volume(1.0, 0.5 * a) / rve.size**3
        for seed in range(4):
            s = estimate_density(rve, a, seed=seed)
            assert abs(s.kappa - exact) / exact < 0.02

    def test_two_disjoint_struts_additive(self):
        rve = synthetic_rve(
            [[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 3.0, 3.0], [2.0, 3.0, 3.0]],
            [[0, 1], [2, 3]],
        )
        a = 0.25
        exact = 2.0 * capsule_volume(1.0, 0.5 * a) / rve.size**3
        s = estimate_density(rve, a, seed=1)
        # the material fraction here is ~0.002, so the Monte Carlo noise
        # floor is wider than for the thicker single-strut case above
        assert abs(s.kappa - exact) / exact < 0.05

    def test_vanishing_aspect_returns_zero(self):
        rve = synthetic_rve([[1.5, 2.0, 2.0], [2.5, 2.0, 2.0]], [[0, 1]])
        s = estimate_density(rve, 1e-9, seed=0)
        assert s.kappa < 1e-4

    def test_seed_stability(self, mid_rve):
        vals = [estimate_density(mid_rve, 0.15, seed=s).kappa for s in range(3)]
        assert (max(vals) - min(vals)) / np.mean(vals) < 0.01

    def test_bad_inputs(self):
        rve = synthetic_rve([[1.5, 2.0, 2.0], [2.5, 2.0, 2.0]], [[0, 1]])
        with pytest.raises(ValueError):
            estimate_density(rve, 0.0)
        with pytest.raises(ValueError):
            estimate_density(rve, 0.2, batch=10)


class TestNaiveDensity:
    def test_closed_form(self):
        rve = synthetic_rve([[1.5, 2.0, 2.0], [2.5, 2.0, 2.0]], [[0, 1]])
        a = 0.1
        expect = np.pi * (a * 1.0) ** 2 / 4.0 * 1.0 / 4.0**3
        assert abs(naive_density(rve, a) - expect) < 1e-15

    def test_overestimates_at_high_aspect(self, mid_rve):
        # joint overlap is ignored, so the cylinder sum exceeds the Monte
        # Carlo estimate once struts are thick
        a = 0.25
        mc = estimate_density(mid_rve, a, seed=0).kappa
        assert naive_density(mid_rve, a) > mc


class TestSigmoidFit:
    def test_recovers_synthetic_parameters(self):
        truth = SigmoidFit(0.10, 0.90, 0.05)
        kappas = np.linspace(0.02, 0.6, 12)
        samples = [
            DensitySample(a=aspect_from_density(truth, k)[0], kappa=k, points=0, seed=0)
            for k in kappas
        ]
        fit = fit_sigmoid(samples)
        assert abs(fit.c1 - truth.c1) < 1e-6
        assert abs(fit.c2 - truth.c2) < 1e-6
        assert abs(fit.c3 - truth.c3) < 1e-6
        assert fit.rms_residual < 1e-9

    def test_reference_constants_valid(self):
        assert PAPER_FIT.kappa_max > 1.0
        d = PAPER_FIT.to_dict()
        assert SigmoidFit.from_dict(d) == PAPER_FIT

    def test_too_few_samples(self):
        samples = [DensitySample(a=0.1, kappa=0.1, points=0, seed=0)] * 4
        with pytest.raises(ValueError):
            fit_sigmoid(samples)

    def test_rve_fit_quality(self, rve_fit):
        assert rve_fit.rms_residual <= 0.01
        assert rve_fit.kappa_max > 0.5


class TestAspectFromDensity:
    def test_zero_density_zero_aspect(self):
        a, _ = aspect_from_density(PAPER_FIT, 0.0)
        assert abs(a) < 1e-14

    def test_half_density_value(self):
        a, da = aspect_from_density(PAPER_FIT, 0.5)
        assert abs(a - 0.3453977381115168) < 1e-12
        assert abs(da - 0.43759537575863916) < 1e-12

    def test_derivative_matches_finite_difference(self):
        h = 1e-6
        for k in (0.05, 0.2, 0.5, 0.8):
            _, da = aspect_from_density(PAPER_FIT, k)
            ap, _ = aspect_from_density(PAPER_FIT, k + h)
            am, _ = aspect_from_density(PAPER_FIT, k - h)
            assert abs(da - (ap - am) / (2 * h)) < 1e-8 * max(1.0, abs(da))

    def test_monotone_increasing(self):
        ks = np.linspace(0.0, 0.9, 200)
        a, da = aspect_from_density(PAPER_FIT, ks)
        assert np.all(np.diff(a) > 0)
        assert np.all(da > 0)

    def test_array_input(self):
        a, da = aspect_from_density(PAPER_FIT, np.array([0.0, 0.5]))
        assert a.shape == (2,) and da.shape == (2,)
        assert abs(a[1] - 0.3453977381115168) < 1e-12

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            aspect_from_density(PAPER_FIT, -0.1)
        with pytest.raises(ValueError):
            aspect_from_density(PAPER_FIT, PAPER_FIT.kappa_max + 0.01)
