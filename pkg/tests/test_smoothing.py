import numpy as np
import pytest

from qpwave.fourier import window_to_grid
from qpwave.galerkin import QuadraticForm, WeightedSpace
from qpwave.smoothing import (
    JacksonKernel,
    ScheduleError,
    decompose,
    smooth_at_scale,
    smooth_form,
)


def kernel():
    return JacksonKernel()


class TestKernel:
    def test_profile_shape(self):
        k = kernel()
        assert k.phi(0.0) == 1.0
        assert k.phi(0.49) == 1.0
        assert k.phi(1.0) == 0.0
        assert k.phi(2.3) == 0.0
        r = np.linspace(0.5, 1.0, 50)
        vals = k.phi(r)
        assert np.all(np.diff(vals) <= 1e-12)  # monotone decay on the shoulder

    def test_constants_preserved(self):
        f = np.zeros((5, 5, 2), dtype=complex)
        f[2, 2, :] = 3.5
        out = smooth_at_scale(f, kernel(), sigma=0.3, n=2, K=2)
        assert np.max(np.abs(out - f)) < 1e-15

    def test_single_mode_scaling(self):
        K = 8
        f = np.zeros((2 * K + 1, 1), dtype=complex)
        f[K + 5, 0] = 1.0  # mode k = 5
        k = kernel()
        sigma = 0.15
        out = smooth_at_scale(f, k, sigma, n=1, K=K)
        assert out[K + 5, 0] == pytest.approx(k.phi(sigma * 5.0), abs=1e-14)
        tiny = smooth_at_scale(f, k, 1e-4, n=1, K=K)
        assert np.max(np.abs(tiny - f)) < 1e-14

    def test_no_new_modes(self):
        rng = np.random.default_rng(0)
        K = 6
        f = np.zeros((2 * K + 1, 3), dtype=complex)
        f[K - 2 : K + 3] = rng.standard_normal((5, 3))
        out = smooth_at_scale(f, kernel(), 0.2, n=1, K=K)
        assert np.max(np.abs(out[: K - 2])) == 0.0
        assert np.max(np.abs(out[K + 3 :])) == 0.0


def synth_decay_field(rng, K, ell, n=2):
    """Positive coefficients c |k|^-(ell+2); sup error then lands at theta=0."""
    from qpwave.fourier import kgrid

    radii = np.linalg.norm(kgrid(n, K), axis=-1)
    coef = np.where(radii > 0, 1.0 / np.maximum(radii, 1.0) ** (ell + 2.0), 0.0)
    return coef.astype(complex)


class TestSmoothingRate:
    @pytest.mark.parametrize("ell", [3, 5])
    def test_error_slope_matches_smoothness(self, ell):
        K = 280  # window must cover the finest-scale envelope support 1/sigma
        coef = synth_decay_field(None, K, ell)
        k = kernel()
        sigmas = [2.0**-e for e in range(3, 9)]
        errors = []
        for s in sigmas:
            env = k.envelope(s, 2, K)
            # positive coefficients: sup over theta of the error is at theta = 0
            errors.append(float(np.sum((1.0 - env) * coef.real)))
        logs = np.log(errors)
        slope = np.polyfit(np.log(sigmas), logs, 1)[0]
        assert abs(slope - ell) / ell < 0.15


def low_band_form(rng, K=6, J=3, band=2, n=2):
    qf = QuadraticForm.zeros(n, K, J)
    from qpwave.fourier import kinf, reality_enforce

    rings = kinf(n, K)
    mask = (rings <= band)[..., None, None]
    for name in qf.BLOCKS:
        arr = (rng.standard_normal(qf.zz.shape) + 1j * rng.standard_normal(qf.zz.shape))
        arr = np.where(mask, arr, 0.0)
        setattr(qf, name, reality_enforce(arr, n, K))
    qf.symmetrize()
    return qf


class TestDecompose:
    def test_analytic_form_has_trivial_pieces(self):
        rng = np.random.default_rng(1)
        qf = low_band_form(rng, K=6, J=3, band=2)
        # band-2 corner modes have Euclidean radius sqrt(8); strips below
        # 0.5/sqrt(8) keep every stored mode inside the flat zone
        dec = decompose(qf, [0.17, 0.1, 0.05], kernel())
        for piece in dec.pieces[1:]:
            assert piece.max_abs() < 1e-14
        assert dec.residual_norm < 1e-12
        total = dec.pieces[0]
        for p in dec.pieces[1:]:
            total = total + p
        assert np.max(np.abs(total.zz - qf.zz)) < 1e-13

    def test_zero_form(self):
        qf = QuadraticForm.zeros(2, 4, 3)
        dec = decompose(qf, [0.25, 0.1], kernel())
        assert all(p.max_abs() == 0.0 for p in dec.pieces)
        assert dec.residual_norm == 0.0

    def test_telescoping_is_exact_in_coefficients(self):
        rng = np.random.default_rng(2)
        qf = low_band_form(rng, K=12, J=2, band=12)
        strips = [0.4, 0.2, 0.1, 0.05]
        dec = decompose(qf, strips, kernel())
        total = dec.pieces[0]
        for p in dec.pieces[1:]:
            total = total + p
        direct = smooth_form(qf, kernel(), strips[-1])
        for a, b in zip(total.blocks(), direct.blocks()):
            assert np.max(np.abs(a - b)) < 1e-15

    def test_strip_tags_and_certificates(self):
        rng = np.random.default_rng(3)
        qf = low_band_form(rng, K=8, J=2, band=8)
        strips = [0.3, 0.15]
        dec = decompose(qf, strips, kernel())
        assert [p.strip for p in dec.pieces] == strips
        for level in range(len(dec.pieces)):
            cert = dec.analyticity_certificate(level)
            assert np.isfinite(cert)

    def test_schedule_validation(self):
        qf = QuadraticForm.zeros(1, 2, 2)
        with pytest.raises(ScheduleError):
            decompose(qf, [0.1, 0.2], kernel())
        with pytest.raises(ScheduleError):
            decompose(qf, [0.7, 0.2], kernel())
        with pytest.raises(ScheduleError):
            decompose(qf, [0.3, -0.1], kernel())

    def test_piece_norm_scaling_tracks_strip_power(self):
        # coefficient decay |k|^-(N+1) in one angle dimension
        N = 4
        K = 96
        J = 2
        qf = QuadraticForm.zeros(1, K, J)
        ks = np.arange(-K, K + 1)
        prof = np.where(ks != 0, 1.0 / np.maximum(np.abs(ks), 1) ** (N + 1.0), 0.0)
        for name in qf.BLOCKS:
            arr = np.zeros((2 * K + 1, J, J), dtype=complex)
            arr[:, 0, 0] = prof
            setattr(qf, name, arr)
        strips = [0.2, 0.1, 0.05, 0.025, 0.0125]
        ws = WeightedSpace(N, J)
        dec = decompose(qf, strips, kernel(), ws=ws)
        norms = dec.piece_norms[1:]
        prev = strips[:-1]
        slope = np.polyfit(np.log(prev), np.log(norms), 1)[0]
        assert abs(slope - N) / N < 0.25
        assert all(np.isfinite(c) for c in dec.bound_constants)
