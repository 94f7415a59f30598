"""Property tests for the structural invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qpwave.fourier import reality_enforce, reality_residual
from qpwave.galerkin import QuadraticForm, coupling_tensor
from qpwave.kam import NormalForm, homological_residual, solve_homological

HALF_PI = np.pi / 2.0


@st.composite
def small_form(draw, n=1, K=3, J=4):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    shape = (2 * K + 1,) * n + (J, J)
    qf = QuadraticForm.zeros(n, K, J)
    for name in qf.BLOCKS:
        arr = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        setattr(qf, name, arr)
    return qf


@given(small_form(), st.integers(0, 3))
@settings(max_examples=40, deadline=None)
def test_truncation_reassembles_bit_exactly(qf, K_cut):
    low, high = qf.truncate(K_cut)
    back = low + high
    for a, b in zip(back.blocks(), qf.blocks()):
        assert np.array_equal(a, b)
    # supports are disjoint
    for a, b in zip(low.blocks(), high.blocks()):
        assert np.all((a == 0) | (b == 0))


@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 20))
@settings(max_examples=200, deadline=None)
def test_coupling_tensor_case_analysis(j, l, k):
    ct = coupling_tensor(20)
    v = ct.coefficient(j, l, k)
    if k not in (l + j, l - j, j - l):
        assert v == 0.0
    else:
        assert v in (HALF_PI, -HALF_PI)
    assert v == ct.coefficient(j, k, l)  # symmetry in the sine indices


@given(small_form())
@settings(max_examples=25, deadline=None)
def test_reality_enforcement_is_projection(qf):
    n, K = qf.n, qf.K
    fixed = reality_enforce(qf.zz, n, K)
    assert reality_residual(fixed, n, K) < 1e-13
    again = reality_enforce(fixed, n, K)
    assert np.allclose(fixed, again, rtol=0, atol=1e-15)


@given(st.integers(0, 2**31 - 1), st.floats(1.05, 1.95))
@settings(max_examples=15, deadline=None)
def test_homological_plugback_property(seed, tau):
    rng = np.random.default_rng(seed)
    n, K, J = 1, 2, 4
    qf = QuadraticForm.zeros(n, K, J)
    for name in qf.BLOCKS:
        arr = rng.standard_normal((2 * K + 1, J, J)) * 0.5
        setattr(qf, name, reality_enforce(arr.astype(complex), n, K))
    qf.symmetrize()
    nf = NormalForm(J=J)
    omega = np.array([tau * np.sqrt(2.0)])
    try:
        sol = solve_homological(qf, nf, omega, K_m=K, gamma_m=1e-9)
    except Exception:
        return  # a genuine near-resonance for this draw; nothing to check
    assert homological_residual(sol, qf, nf, omega) < 1e-12
    # support confinement
    _, high = sol.F.truncate(K)
    assert high.max_abs() == 0.0
