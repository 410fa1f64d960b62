"""Scan correctness, dense RNN baseline, ZOH discretization, impulses.

The parallel scan is the performance-critical kernel: this file pins its
agreement with the sequential loop, its algebraic building blocks, and
closed-form trajectories.  scipy.signal provides the independent route
for the ZOH formulas.
"""

import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from lrukit.initializers import RingConfig, lru_init
from lrukit.recurrence import (
    ScanElement,
    ZohSystem,
    affine_scan,
    dense_rnn_forward,
    impulse_response,
    impulse_response_matrix,
    lru_forward,
    scan_combine,
    scan_identity,
    to_real_block_form,
    zoh_discretize,
)
from lrukit.seeding import make_generator, split


def _random_scan_inputs(seed: int, batch: int, length: int, n: int, r_max=0.99):
    rng = make_generator(seed)
    lam_rng, b_rng = split(rng, 2)
    radii = r_max * lam_rng.random(n) ** 0.5
    phases = 2 * np.pi * lam_rng.random(n)
    lam = radii * np.exp(1j * phases)
    b = b_rng.standard_normal((batch, length, n)) + 1j * b_rng.standard_normal(
        (batch, length, n)
    )
    return lam, b


# ---------------------------------------------------------------------------
# scan algebra
# ---------------------------------------------------------------------------


def test_scan_identity_is_neutral():
    rng = make_generator(0)
    n = 5
    e = ScanElement(a=rng.standard_normal(n) + 1j, b=rng.standard_normal(n) + 0j)
    ident = scan_identity(n)
    for combined in (scan_combine(ident, e), scan_combine(e, ident)):
        np.testing.assert_allclose(combined.a, e.a)
        np.testing.assert_allclose(combined.b, e.b)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_scan_combine_is_associative(seed):
    rng = make_generator(seed)
    n = 3

    def element():
        return ScanElement(
            a=rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n),
            b=rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n),
        )

    e1, e2, e3 = element(), element(), element()
    left = scan_combine(scan_combine(e1, e2), e3)
    right = scan_combine(e1, scan_combine(e2, e3))
    np.testing.assert_allclose(left.a, right.a, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(left.b, right.b, rtol=1e-12, atol=1e-12)


def test_scan_element_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        ScanElement(a=np.ones(3, dtype=complex), b=np.ones(4, dtype=complex))


# ---------------------------------------------------------------------------
# parallel vs sequential equivalence
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("length", [1, 2, 3, 5, 64, 257, 1000])
def test_parallel_matches_sequential(length):
    lam, b = _random_scan_inputs(length, batch=2, length=length, n=8)
    seq = affine_scan(lam, b, mode="sequential")
    par = affine_scan(lam, b, mode="parallel")
    scale = np.abs(seq).max()
    assert np.abs(par - seq).max() <= 1e-12 * max(scale, 1.0)


@pytest.mark.parametrize("threads", [1, 2, 4])
@pytest.mark.parametrize("chunk_len", [None, 16, 64])
def test_parallel_options_agree(threads, chunk_len):
    lam, b = _random_scan_inputs(99, batch=3, length=321, n=6)
    seq = affine_scan(lam, b, mode="sequential")
    par = affine_scan(lam, b, mode="parallel", chunk_len=chunk_len, threads=threads)
    scale = np.abs(seq).max()
    assert np.abs(par - seq).max() <= 1e-12 * max(scale, 1.0)


def test_scan_rejects_unknown_mode():
    lam, b = _random_scan_inputs(0, batch=1, length=4, n=2)
    with pytest.raises(ValueError, match="mode"):
        affine_scan(lam, b, mode="fancy")


def test_scan_constant_drive_closed_form():
    lam = np.array([0.9 * np.exp(0.3j)])
    length = 50
    b = np.ones((1, length, 1), dtype=np.complex128) * (0.7 - 0.2j)
    states = affine_scan(lam, b, mode="parallel")[0, :, 0]
    k = np.arange(1, length + 1)
    expected = (0.7 - 0.2j) * (1 - lam[0] ** k) / (1 - lam[0])
    np.testing.assert_allclose(states, expected, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 200))
def test_parallel_matches_sequential_property(seed, length):
    lam, b = _random_scan_inputs(seed, batch=1, length=length, n=4)
    seq = affine_scan(lam, b, mode="sequential")
    par = affine_scan(lam, b, mode="parallel")
    scale = np.abs(seq).max()
    assert np.abs(par - seq).max() <= 1e-11 * max(scale, 1.0)


# ---------------------------------------------------------------------------
# recurrent layer forward
# ---------------------------------------------------------------------------


def test_lru_forward_matches_direct_recurrence():
    params = lru_init(RingConfig(r_min=0.3, r_max=0.9), (3, 8, 3), make_generator(11))
    rng = make_generator(12)
    u = rng.standard_normal((2, 40, 3))
    y, x = lru_forward(params, u, mode="parallel")

    lam, gamma = params.lam, params.gamma
    state = np.zeros((2, 8), dtype=np.complex128)
    for k in range(40):
        state = lam * state + gamma * (u[:, k] @ params.b.T)
        np.testing.assert_allclose(x[:, k], state, rtol=1e-10, atol=1e-12)
        y_k = np.real(state @ params.c.T) + params.d * u[:, k]
        np.testing.assert_allclose(y[:, k], y_k, rtol=1e-10, atol=1e-12)


def test_lru_forward_single_sequence_squeeze():
    params = lru_init(RingConfig(r_min=0.3, r_max=0.9), (2, 4, 2), make_generator(13))
    u = make_generator(14).standard_normal((10, 2))
    y, x = lru_forward(params, u)
    assert y.shape == (10, 2)
    assert x.shape == (10, 4)
    y_b, x_b = lru_forward(params, u[None])
    np.testing.assert_array_equal(y, y_b[0])
    np.testing.assert_array_equal(x, x_b[0])


def test_lru_forward_validates_inputs():
    params = lru_init(RingConfig(r_min=0.3, r_max=0.9), (2, 4, 2), make_generator(15))
    with pytest.raises(ValueError, match="feature dim"):
        lru_forward(params, np.zeros((5, 3)))
    with pytest.raises(ValueError, match="NaN"):
        lru_forward(params, np.full((5, 2), np.nan))


# ---------------------------------------------------------------------------
# dense RNN baseline
# ---------------------------------------------------------------------------


def _dense_reference(a, b, c, d, activation, u):
    acts = {
        "linear": lambda z: z,
        "tanh": np.tanh,
        "relu": lambda z: np.maximum(z, 0.0),
    }
    sigma = acts[activation]
    batch, length, _ = u.shape
    x = np.zeros((batch, a.shape[0]))
    ys = []
    for k in range(length):
        x = sigma(x @ a.T + u[:, k] @ b.T)
        ys.append(x @ c.T + u[:, k] @ d.T)
    return np.stack(ys, axis=1)


@pytest.mark.parametrize("activation", ["linear", "tanh", "relu"])
def test_dense_rnn_matches_reference(activation):
    rng = make_generator(20)
    n, h = 6, 3
    a = 0.5 * rng.standard_normal((n, n))
    b = rng.standard_normal((n, h))
    c = rng.standard_normal((h, n))
    d = rng.standard_normal((h, h))
    u = rng.standard_normal((2, 15, h))
    y = dense_rnn_forward(a, b, c, d, activation, u)
    np.testing.assert_allclose(y, _dense_reference(a, b, c, d, activation, u), rtol=1e-12)


def test_dense_rnn_zero_recurrence_tanh_is_pointwise():
    rng = make_generator(21)
    n, h = 5, 2
    b = rng.standard_normal((n, h))
    c = rng.standard_normal((h, n))
    d = rng.standard_normal((h, h))
    u = rng.standard_normal((1, 12, h))
    y = dense_rnn_forward(np.zeros((n, n)), b, c, d, "tanh", u)
    expected = np.tanh(u @ b.T) @ c.T + u @ d.T
    np.testing.assert_allclose(y, expected, rtol=1e-12)


def test_dense_rnn_rejects_unknown_activation():
    with pytest.raises(ValueError):
        dense_rnn_forward(
            np.zeros((2, 2)),
            np.zeros((2, 1)),
            np.zeros((1, 2)),
            np.zeros((1, 1)),
            "sigmoid",
            np.zeros((1, 3, 1)),
        )


# ---------------------------------------------------------------------------
# ZOH discretization vs scipy.signal
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("delta", [0.01, 0.1, 1.0])
def test_zoh_exact_matches_scipy(delta):
    a_c = -0.5 + 3.0j
    b_c = 0.8 - 0.4j
    # Real 2×2 embedding of the complex scalar system.
    a_block = np.array([[a_c.real, -a_c.imag], [a_c.imag, a_c.real]])
    b_block = np.array([[b_c.real], [b_c.imag]])
    ad, bd, *_ = scipy.signal.cont2discrete(
        (a_block, b_block, np.eye(2), np.zeros((2, 1))), dt=delta, method="zoh"
    )
    lam, b = zoh_discretize(
        ZohSystem(np.array([a_c]), np.array([[b_c]]), delta), mode="exact"
    )
    np.testing.assert_allclose(
        to_real_block_form(lam), ad, rtol=1e-10, atol=1e-12
    )
    np.testing.assert_allclose(
        np.array([[b[0, 0].real], [b[0, 0].imag]]), bd, rtol=1e-10, atol=1e-12
    )


def test_zoh_first_order_is_small_delta_limit():
    sys = ZohSystem(np.array([-0.2 + 1.0j]), np.array([[1.0 + 0j]]), 1e-6)
    lam_e, b_e = zoh_discretize(sys, mode="exact")
    lam_f, b_f = zoh_discretize(sys, mode="first_order")
    np.testing.assert_array_equal(lam_e, lam_f)
    np.testing.assert_allclose(b_e, b_f, rtol=1e-5)


def test_zoh_validation():
    with pytest.raises(ValueError, match="positive"):
        ZohSystem(np.array([-1.0 + 0j]), np.array([[1.0 + 0j]]), 0.0)
    with pytest.raises(ValueError, match="Re"):
        ZohSystem(np.array([0.5 + 0j]), np.array([[1.0 + 0j]]), 0.1)
    with pytest.raises(ValueError, match="mode"):
        zoh_discretize(
            ZohSystem(np.array([-1.0 + 0j]), np.array([[1.0 + 0j]]), 0.1),
            mode="bilinear",
        )


def test_real_block_form_spectrum():
    lam = np.array([0.5 + 0.3j, -0.2 + 0.9j])
    block = to_real_block_form(lam)
    eigs = np.sort_complex(np.linalg.eigvals(block))
    expected = np.sort_complex(np.concatenate([lam, np.conj(lam)]))
    np.testing.assert_allclose(eigs, expected, rtol=1e-12, atol=1e-12)
    # Powers commute with the embedding.
    np.testing.assert_allclose(
        np.linalg.matrix_power(block, 3), to_real_block_form(lam**3), rtol=1e-12
    )


# ---------------------------------------------------------------------------
# impulse responses
# ---------------------------------------------------------------------------


def test_impulse_matrix_matches_forward_pass():
    params = lru_init(RingConfig(r_min=0.4, r_max=0.9), (2, 6, 2), make_generator(30))
    length = 32
    u = np.zeros((length, 2))
    u[0] = 1.0
    _, x = lru_forward(params, u)
    np.testing.assert_allclose(
        impulse_response_matrix(params, length), np.real(x), rtol=1e-10, atol=1e-14
    )


def test_impulse_channel_geometric_decay():
    params = lru_init(RingConfig(r_min=0.6, r_max=0.6), (1, 4, 1), make_generator(31))
    traj = impulse_response(params, 20, channel=2)
    lam = params.lam[2]
    x1 = params.gamma[2] * params.b[2].sum()
    expected = np.real(x1 * lam ** np.arange(20))
    np.testing.assert_allclose(traj, expected, rtol=1e-12, atol=1e-14)


def test_impulse_validation():
    params = lru_init(RingConfig(r_min=0.4, r_max=0.9), (1, 4, 1), make_generator(32))
    with pytest.raises(ValueError):
        impulse_response_matrix(params, 0)
    with pytest.raises(ValueError):
        impulse_response(params, 8, channel=4)
