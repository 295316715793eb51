import numpy as np
import pytest

from simstack.channel import (
    ChannelRealization,
    RisLayer,
    SimStack,
    channel_exact_s,
    channel_exact_t,
    channel_simplified,
    wave_oracle_channel,
    wrap_phases,
)
from simstack.multiport import (
    SCATTERING,
    BlockTwoPort,
    SolveCounter,
    check_persymmetric,
    check_pseudo_unitary,
    check_symmetric,
    check_unitary,
    count_inversions_s,
    s_to_t,
    cascade_s_chain,
)

from conftest import random_scattering, random_unitary


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def make_stack(layer_count, n, rng, scale=0.75):
    layers = tuple(RisLayer(rng.uniform(0, 2 * np.pi, n)) for _ in range(layer_count))
    media = tuple(random_scattering(n, rng, scale) for _ in range(layer_count - 1))
    return SimStack(layers, media)


def make_realization(n, k, rng, noise=1.0, p_max=2.0):
    return ChannelRealization(complex_gaussian(rng, (n, k)),
                              complex_gaussian(rng, (k, n)), noise, p_max)


def reflection_free(media):
    out = []
    for m in media:
        zero = np.zeros((m.n, m.n))
        out.append(BlockTwoPort(SCATTERING, zero, m.b21.T, m.b21, zero))
    return tuple(out)


class TestRisLayer:
    def test_phases_wrap(self):
        layer = RisLayer(np.array([-0.5, 2 * np.pi + 0.25, 7.0]))
        assert np.all(layer.phases >= 0)
        assert np.all(layer.phases < 2 * np.pi)

    def test_scattering_satisfies_lossless_reciprocal(self, rng):
        layer = RisLayer(rng.uniform(0, 2 * np.pi, 5))
        assert check_unitary(layer.scattering())
        assert check_symmetric(layer.scattering())

    def test_transfer_satisfies_chain_constraints(self, rng):
        layer = RisLayer(rng.uniform(0, 2 * np.pi, 5))
        assert check_pseudo_unitary(layer.transfer())
        assert check_persymmetric(layer.transfer())

    def test_transfer_matches_converted_scattering(self, rng):
        layer = RisLayer(rng.uniform(0, 2 * np.pi, 4))
        np.testing.assert_allclose(layer.transfer().full(),
                                   s_to_t(layer.scattering()).full(), atol=1e-12)


class TestSimStack:
    def test_media_count_checked(self, rng):
        layers = tuple(RisLayer(np.zeros(3)) for _ in range(3))
        with pytest.raises(ValueError):
            SimStack(layers, (random_scattering(3, rng),))

    def test_with_phases_shares_media_conversions(self, rng):
        stack = make_stack(3, 4, rng)
        other = stack.with_phases(rng.uniform(0, 2 * np.pi, (3, 4)))
        assert other.media_t is stack.media_t
        assert other.media is stack.media

    def test_phase_matrix_round_trip(self, rng):
        phi = rng.uniform(0, 2 * np.pi, (3, 4))
        stack = make_stack(3, 4, rng).with_phases(phi)
        np.testing.assert_allclose(stack.phase_matrix, phi)


class TestChannelRealization:
    def test_shape_validation(self, rng):
        with pytest.raises(ValueError):
            ChannelRealization(complex_gaussian(rng, (4, 2)),
                               complex_gaussian(rng, (3, 4)), 1.0, 2.0)
        with pytest.raises(ValueError):
            ChannelRealization(complex_gaussian(rng, (4, 2)),
                               complex_gaussian(rng, (2, 4)), 0.0, 2.0)


class TestExactChannels:
    def test_single_identity_layer_is_pure_external_product(self, rng):
        stack = SimStack((RisLayer(np.zeros(5)),), ())
        ch = make_realization(5, 2, rng)
        np.testing.assert_allclose(channel_exact_t(stack, ch),
                                   ch.h_ri @ ch.h_it, atol=1e-12)

    def test_two_layer_expansion(self, rng):
        # the (2,2) block of the two-layer chain, expanded term by term
        stack = make_stack(2, 4, rng)
        ch = make_realization(4, 2, rng)
        g1, t1, g2 = (m.full() for m in stack.transfer_elements())
        n = 4
        t22 = (g1[n:, :n] @ t1[:n, :n] @ g2[:n, n:]
               + g1[n:, :n] @ t1[:n, n:] @ g2[n:, n:]
               + g1[n:, n:] @ t1[n:, :n] @ g2[:n, n:]
               + g1[n:, n:] @ t1[n:, n:] @ g2[n:, n:])
        expected = ch.h_ri @ np.linalg.solve(t22, ch.h_it)
        np.testing.assert_allclose(channel_exact_t(stack, ch), expected, atol=1e-12)

    def test_transfer_matches_scattering_route(self, rng):
        for _ in range(5):
            stack = make_stack(3, 6, rng)
            ch = make_realization(6, 2, rng)
            ht = channel_exact_t(stack, ch)
            hs = channel_exact_s(stack, ch)
            assert rel_err(hs, ht) < 1e-10

    def test_factorization_budgets(self, rng):
        for layer_count in (2, 3, 4):
            stack = make_stack(layer_count, 4, rng)
            ch = make_realization(4, 2, rng)
            ct, cs = SolveCounter(), SolveCounter()
            channel_exact_t(stack, ch, ct)
            channel_exact_s(stack, ch, cs)
            assert ct.count == 1
            assert cs.count == count_inversions_s(layer_count)


class TestSimplifiedChannel:
    def test_single_layer(self, rng):
        layer = RisLayer(rng.uniform(0, 2 * np.pi, 5))
        stack = SimStack((layer,), ())
        ch = make_realization(5, 2, rng)
        expected = ch.h_ri @ np.diag(layer.transmission_diag) @ ch.h_it
        np.testing.assert_allclose(channel_simplified(stack, ch), expected, atol=1e-12)

    def test_equals_exact_on_reflection_free_media(self, rng):
        for layer_count in (2, 3, 5):
            stack = make_stack(layer_count, 5, rng)
            stack = SimStack(stack.layers, reflection_free(stack.media))
            ch = make_realization(5, 2, rng)
            assert rel_err(channel_simplified(stack, ch),
                           channel_exact_t(stack, ch)) < 1e-10

    def test_equals_exact_even_with_asymmetric_backward_blocks(self, rng):
        # zero reflection is the only requirement; the backward transmission
        # block may be anything
        stack = make_stack(3, 4, rng)
        zero = np.zeros((4, 4))
        media = tuple(
            BlockTwoPort(SCATTERING, zero,
                         np.asarray(complex_gaussian(rng, (4, 4))), m.b21, zero)
            for m in stack.media)
        stack = SimStack(stack.layers, media)
        ch = make_realization(4, 2, rng)
        assert rel_err(channel_simplified(stack, ch),
                       channel_exact_t(stack, ch)) < 1e-10

    def test_differs_from_exact_with_reflective_media(self, rng):
        stack = make_stack(3, 5, rng, scale=0.8)
        ch = make_realization(5, 2, rng)
        gap = rel_err(channel_simplified(stack, ch), channel_exact_t(stack, ch))
        assert gap > 1e-3

    def test_dipole_media_open_a_gap(self, rng):
        # wire-coupled media reflect (nonzero diagonal blocks), so the
        # forward-only model measurably deviates from the exact one
        from simstack.medium import ArrayGeometry, DipoleMediumProvider

        lam = 0.0107
        geometry = ArrayGeometry(2, 2, lam / 2, lam / 2, lam / 2, lam / 4,
                                 lam / 500, lam, 3)
        provider = DipoleMediumProvider()
        media = tuple(provider.scattering(geometry, pair) for pair in (1, 2))
        layers = tuple(RisLayer(rng.uniform(0, 2 * np.pi, 4)) for _ in range(3))
        stack = SimStack(layers, media, geometry)
        ch = make_realization(4, 2, rng)
        gap = rel_err(channel_simplified(stack, ch), channel_exact_t(stack, ch))
        assert gap > 1e-3


class TestWaveOracle:
    def test_square_case_matches_transfer_route(self, rng):
        for _ in range(5):
            stack = make_stack(3, 4, rng)
            ch = make_realization(4, 4, rng)
            assert rel_err(wave_oracle_channel(stack, ch),
                           channel_exact_t(stack, ch)) < 1e-10

    def test_padded_case_matches_transfer_route(self, rng):
        stack = make_stack(2, 4, rng)
        ch = make_realization(4, 2, rng)
        assert rel_err(wave_oracle_channel(stack, ch),
                       channel_exact_t(stack, ch)) < 1e-10

    def test_identity_stack_reduces_to_external_product(self, rng):
        n = 4
        layers = (RisLayer(np.zeros(n)), RisLayer(np.zeros(n)))
        stack = SimStack(layers, (BlockTwoPort.through(n),))
        ch = make_realization(n, n, rng)
        np.testing.assert_allclose(wave_oracle_channel(stack, ch),
                                   ch.h_ri @ ch.h_it, atol=1e-10)


class TestModelEquivalence:
    def test_three_routes_agree_across_shapes(self, rng):
        worst = 0.0
        for _ in range(20):
            layer_count = int(rng.integers(2, 6))
            n = int(rng.integers(4, 9))
            k = int(rng.choice([1, 2, 4]))
            stack = make_stack(layer_count, n, rng)
            ch = make_realization(n, k, rng)
            ht = channel_exact_t(stack, ch)
            worst = max(worst, rel_err(channel_exact_s(stack, ch), ht),
                        rel_err(wave_oracle_channel(stack, ch), ht))
        assert worst < 1e-10

    def test_lossless_stack_preserves_unitarity(self, rng):
        # unitary-symmetric media and ideal layers keep the cascade unitary
        n = 4
        layers = tuple(RisLayer(rng.uniform(0, 2 * np.pi, n)) for _ in range(3))
        media = []
        for _ in range(2):
            u = random_unitary(2 * n, rng)
            media.append(BlockTwoPort.from_full(SCATTERING, u @ u.T))
        stack = SimStack(layers, tuple(media))
        total = cascade_s_chain(stack.scattering_elements())
        singular_values = np.linalg.svd(total.full(), compute_uv=False)
        np.testing.assert_allclose(singular_values, 1.0, atol=1e-10)


class TestWrapPhases:
    def test_wraps_into_base_interval(self):
        out = wrap_phases([-np.pi, 0.0, 2 * np.pi, 9.0])
        assert np.all(out >= 0)
        assert np.all(out < 2 * np.pi)
