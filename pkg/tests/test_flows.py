"""Vorticity specifications and laminar flows against closed forms."""

import math

import numpy as np
import pytest

from capwaves.flows import TrivialFlowError, VorticitySpec, is_unidirectional, trivial_flow
from capwaves.spectral import GridSpec

GRID = GridSpec(2 * math.pi, 1.0, 8, 50)


def closed_form(vort: VorticitySpec, lam, y):
    """Laminar profile and its y-derivative for constant/affine vorticity."""
    a, b = vort.a, vort.b
    if a == 0.0:
        return -b * y**2 / 2 + lam * y, -b * y + lam
    if a < 0:
        s = math.sqrt(-a)
        return lam * np.sinh(s * y) / s + (b / a) * (np.cosh(s * y) - 1), lam * np.cosh(s * y) + (b / a) * s * np.sinh(s * y)
    s = math.sqrt(a)
    return lam * np.sin(s * y) / s + (b / a) * (np.cos(s * y) - 1), lam * np.cos(s * y) - (b / a) * s * np.sin(s * y)


class TestVorticitySpec:
    @pytest.mark.parametrize("text", ["constant:2.5", "affine:-2,1", "affine:3,0.5", "poly:1,2"])
    def test_parse_round_trip(self, text):
        v = VorticitySpec.parse(text)
        assert VorticitySpec.parse(str(v)) == v

    @pytest.mark.parametrize("text", ["", "constant:", "constant:1,2", "affine:1", "linear:1", "poly:", "constant:abc"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError, match="vorticity"):
            VorticitySpec.parse(text)

    def test_affine_evaluations(self):
        v = VorticitySpec.parse("affine:-2,1")
        s = np.array([-1.0, 0.0, 2.0])
        assert np.allclose(v.gamma(s), -2 * s + 1)
        assert np.allclose(v.dgamma(s), -2.0)
        assert np.allclose(v.d2gamma(s), 0.0)
        assert np.allclose(v.primitive(s), -(s**2) + s)
        assert v.is_affine and v.a == -2.0 and v.b == 1.0

    def test_polynomial_warns(self):
        with pytest.warns(UserWarning, match="unbounded"):
            v = VorticitySpec.parse("poly:0,0,1")
        assert not v.is_affine
        assert np.allclose(v.d2gamma(np.array([0.3])), 2.0)


class TestTrivialFlow:
    @pytest.mark.parametrize("text", ["constant:0", "constant:2", "constant:-1.5", "affine:-2,1", "affine:3,0.5"])
    @pytest.mark.parametrize("lam", [-2.0, 0.7, 3.0])
    def test_closed_forms(self, text, lam):
        v = VorticitySpec.parse(text)
        f = trivial_flow(lam, v, GRID)
        psi, psi_y = closed_form(v, lam, GRID.y)
        assert np.max(np.abs(f.psi - psi)) < 1e-10
        assert np.max(np.abs(f.psi_y - psi_y)) < 1e-10

    def test_cauchy_data(self):
        f = trivial_flow(1.3, VorticitySpec.parse("affine:-2,1"), GRID)
        assert f.psi[-1] == pytest.approx(0.0, abs=1e-14)
        assert f.psi_y[-1] == pytest.approx(1.3, abs=1e-14)
        assert f.psi_lam[-1] == pytest.approx(0.0, abs=1e-14)
        assert f.psi_lam_y[-1] == pytest.approx(1.0, abs=1e-14)
        assert f.m == -f.psi[0]

    @pytest.mark.parametrize("lam", [-3.0, 0.5, 2.0])
    def test_mass_flux_constant_vorticity(self, lam):
        gam, h = 2.0, GRID.h
        f = trivial_flow(lam, VorticitySpec.constant(gam), GRID)
        assert f.m == pytest.approx(lam * h + gam * h**2 / 2, abs=1e-12)
        assert f.dm_dlam == pytest.approx(h, abs=1e-12)

    @pytest.mark.parametrize("text", ["constant:2", "affine:-2,1", "affine:3,0.5", "poly:0.5,-1,0.3"])
    def test_mass_flux_derivative(self, text):
        if text.startswith("poly"):
            with pytest.warns(UserWarning):
                v = VorticitySpec.parse(text)
        else:
            v = VorticitySpec.parse(text)
        lam, eps = 1.1, 1e-5
        fd = (trivial_flow(lam + eps, v, GRID).m - trivial_flow(lam - eps, v, GRID).m) / (2 * eps)
        assert fd == pytest.approx(trivial_flow(lam, v, GRID).dm_dlam, rel=1e-6)

    @pytest.mark.parametrize("text", ["constant:2", "affine:-2,1", "affine:3,0.5"])
    def test_first_integral(self, text):
        v = VorticitySpec.parse(text)
        f = trivial_flow(-1.7, v, GRID)
        energy = f.psi_y**2 / 2 + v.primitive(f.psi)
        assert np.ptp(energy) < 10 * 1e-12 * max(1.0, np.max(np.abs(energy)))

    def test_blow_up_reported(self):
        with pytest.warns(UserWarning):
            v = VorticitySpec.parse("poly:0,0,-1")
        with pytest.raises(TrivialFlowError, match="does not reach -h"):
            trivial_flow(1000.0, v, GRID)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(ValueError):
            trivial_flow(1.0, VorticitySpec.constant(0.0), GRID, tol=0.0)


class TestUnidirectional:
    def test_irrotational_negative(self):
        assert is_unidirectional(trivial_flow(-1.0, VorticitySpec.constant(0.0), GRID))

    def test_constant_half_depth(self):
        gam, h = 2.0, GRID.h
        assert not is_unidirectional(trivial_flow(-gam * h / 2, VorticitySpec.constant(gam), GRID))
        assert is_unidirectional(trivial_flow(-gam * h - 0.01, VorticitySpec.constant(gam), GRID))

    def test_affine_threshold(self):
        a, b, h = -2.0, 1.0, GRID.h
        s = math.sqrt(-a)
        crit = -(b / s) * math.tanh(s * h)
        v = VorticitySpec.affine(a, b)
        assert not is_unidirectional(trivial_flow(crit + 1e-3, v, GRID))
        assert is_unidirectional(trivial_flow(crit - 1e-3, v, GRID))
