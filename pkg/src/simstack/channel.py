"""End-to-end multiuser channel assembly for a stack of phase layers.

Three channel models produce the K x K user channel:

* ``channel_exact_s`` - recursive scattering cascade, reading off the forward
  transmission block. Physically complete (all reflections and inter-layer
  feedback), but the block expansion requires many inversions.
* ``channel_exact_t`` - chain product of transfer matrices followed by a
  single inversion of the (2,2) block. Numerically identical to the
  scattering route by construction.
* ``channel_simplified`` - forward transmission blocks only, no feedback and
  no intra-layer reflection. Coincides with the exact models whenever every
  medium is reflection-free.

``wave_oracle_channel`` independently re-derives the channel from a full
wave-domain cascade that includes the external segments as transfer matrices
and excites the result one basis vector at a time. It is the reference the
exact models are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .medium import ArrayGeometry
from .multiport import (
    SCATTERING,
    TRANSFER,
    BlockTwoPort,
    NonInvertibleTransfer,
    NumericsError,
    SolveCounter,
    _Factorization,
    cascade_s21,
    s_to_t,
    solve,
    t_chain,
)

__all__ = [
    "RisLayer",
    "SimStack",
    "ChannelRealization",
    "channel_exact_t",
    "channel_exact_s",
    "channel_simplified",
    "wave_oracle_channel",
    "wrap_phases",
]


def wrap_phases(phases) -> np.ndarray:
    """Wrap phases into [0, 2*pi)."""
    return np.mod(np.asarray(phases, dtype=float), 2 * np.pi)


@dataclass(frozen=True)
class RisLayer:
    """One transmissive phase layer: a per-element phase vector and its
    induced scattering / transfer matrices.

    The ideal single-connected transmissive layer reflects nothing and
    multiplies the passing wave by exp(j phase) per element, which satisfies
    the lossless (unitary) and reciprocity (symmetry) constraints with unit
    transmission magnitude.
    """

    phases: np.ndarray

    def __post_init__(self):
        p = wrap_phases(self.phases)
        if p.ndim != 1:
            raise ValueError("phases must be a 1-d vector")
        p.setflags(write=False)
        object.__setattr__(self, "phases", p)

    @property
    def n(self) -> int:
        return self.phases.shape[0]

    @property
    def transmission_diag(self) -> np.ndarray:
        """Diagonal of the per-element transmission factor, exp(j phases)."""
        return np.exp(1j * self.phases)

    def scattering(self) -> BlockTwoPort:
        d = np.diag(self.transmission_diag)
        zero = np.zeros((self.n, self.n))
        return BlockTwoPort(SCATTERING, zero, d, d, zero)

    def transfer(self) -> BlockTwoPort:
        # blkdiag(D, D^-1); the inverse of a unit-modulus diagonal is its
        # conjugate, so no solve is needed.
        d = self.transmission_diag
        zero = np.zeros((self.n, self.n))
        return BlockTwoPort(TRANSFER, np.diag(d), zero, zero, np.diag(d.conj()))


@dataclass(frozen=True)
class SimStack:
    """L phase layers interleaved with L-1 transmission media.

    ``media`` holds scattering-form media; their transfer forms are converted
    once at construction and reused, so repeated channel evaluations with new
    phases (the optimizer's inner loop) pay no conversion cost.
    """

    layers: tuple
    media: tuple
    geometry: ArrayGeometry | None = None
    media_t: tuple = field(default=None, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        media = tuple(self.media)
        if len(media) != len(layers) - 1:
            raise ValueError("need exactly one medium between each pair of layers")
        n = layers[0].n
        for layer in layers:
            if layer.n != n:
                raise ValueError("layer dimension mismatch")
        for m in media:
            if m.kind != SCATTERING or m.n != n:
                raise ValueError("media must be scattering matrices of matching size")
        media_t = self.media_t
        if media_t is None:
            media_t = tuple(s_to_t(m) for m in media)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "media", media)
        object.__setattr__(self, "media_t", tuple(media_t))

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def n(self) -> int:
        return self.layers[0].n

    @property
    def phase_matrix(self) -> np.ndarray:
        """(L, N) matrix of the per-layer phase vectors."""
        return np.vstack([layer.phases for layer in self.layers])

    def with_phases(self, phi) -> "SimStack":
        """New stack with replaced phases, sharing this stack's media (and
        their cached transfer forms)."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        if phi.shape != (self.layer_count, self.n):
            raise ValueError(f"expected phase matrix of shape {(self.layer_count, self.n)}")
        return SimStack(tuple(RisLayer(row) for row in phi),
                        self.media, self.geometry, self.media_t)

    def scattering_elements(self) -> list:
        """Alternating layer/medium scattering matrices, input side first."""
        out = [self.layers[0].scattering()]
        for medium, layer in zip(self.media, self.layers[1:]):
            out.append(medium)
            out.append(layer.scattering())
        return out

    def transfer_elements(self) -> list:
        """Alternating layer/medium transfer matrices, input side first."""
        out = [self.layers[0].transfer()]
        for medium_t, layer in zip(self.media_t, self.layers[1:]):
            out.append(medium_t)
            out.append(layer.transfer())
        return out


@dataclass(frozen=True)
class ChannelRealization:
    """External fading segments plus link-budget parameters: feed-to-stack
    matrix ``h_it`` (N x K), stack-to-users matrix ``h_ri`` (K x N), noise
    power spectral density and the total power budget (watts)."""

    h_it: np.ndarray
    h_ri: np.ndarray
    noise_psd: float
    p_max: float

    def __post_init__(self):
        h_it = np.asarray(self.h_it, dtype=np.complex128)
        h_ri = np.asarray(self.h_ri, dtype=np.complex128)
        if h_it.ndim != 2 or h_ri.ndim != 2:
            raise ValueError("external segments must be matrices")
        n, k = h_it.shape
        if h_ri.shape != (k, n):
            raise ValueError(f"shape mismatch: h_it {h_it.shape} vs h_ri {h_ri.shape}")
        if self.noise_psd <= 0 or self.p_max <= 0:
            raise ValueError("noise_psd and p_max must be positive")
        h_it.setflags(write=False)
        h_ri.setflags(write=False)
        object.__setattr__(self, "h_it", h_it)
        object.__setattr__(self, "h_ri", h_ri)

    @property
    def users(self) -> int:
        return self.h_it.shape[1]

    @property
    def n(self) -> int:
        return self.h_it.shape[0]


def _check_dims(stack: SimStack, ch: ChannelRealization):
    if stack.n != ch.n:
        raise ValueError(f"stack dimension {stack.n} != channel dimension {ch.n}")


def channel_exact_t(stack: SimStack, ch: ChannelRealization,
                    counter: SolveCounter | None = None) -> np.ndarray:
    """K x K channel via the transfer-chain model:
    H = h_ri @ T22^-1 @ h_it with T the chain product over the stack.

    Exactly one N x N factorization per evaluation (the media transfer forms
    are cached on the stack). Raises NonInvertibleTransfer when the chain's
    (2,2) block is singular, which signals a fully reflective stack.
    """
    _check_dims(stack, ch)
    t_i = t_chain(stack.transfer_elements())
    return ch.h_ri @ solve(t_i.b22, ch.h_it, exc=NonInvertibleTransfer,
                           what="channel chain (T22)", counter=counter)


def channel_exact_s(stack: SimStack, ch: ChannelRealization,
                    counter: SolveCounter | None = None) -> np.ndarray:
    """K x K channel via the recursive scattering cascade:
    H = h_ri @ S21 @ h_it with S21 the stack's forward transmission block,
    evaluated by need (see cascade_s21 for the factorization accounting)."""
    _check_dims(stack, ch)
    s21 = cascade_s21(stack.scattering_elements(), counter)
    return ch.h_ri @ s21 @ ch.h_it


def channel_simplified(stack: SimStack, ch: ChannelRealization) -> np.ndarray:
    """K x K channel keeping only forward transmission:
    H = h_ri @ D_L @ S_{L-1,21} @ ... @ S_{1,21} @ D_1 @ h_it
    with D_l the diagonal per-layer transmission factors.

    Ignores inter-layer feedback and intra-layer reflection; equals the exact
    models whenever every medium has zero reflection blocks.
    """
    _check_dims(stack, ch)
    v = stack.layers[0].transmission_diag[:, None] * ch.h_it
    for medium, layer in zip(stack.media, stack.layers[1:]):
        v = medium.b21 @ v
        v = layer.transmission_diag[:, None] * v
    return ch.h_ri @ v


def _identity_completed(block: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Embed a K-column (or K-row) external segment into an N x N matrix,
    completing the missing columns (rows) with identity columns (rows) so the
    embedding stays invertible. The completion never leaks into the retained
    K x K sub-block of the resulting channel."""
    out = np.eye(n, dtype=np.complex128)
    if axis == 1:
        out[:, :block.shape[1]] = block
    else:
        out[:block.shape[0], :] = block
    return out


def wave_oracle_channel(stack: SimStack, ch: ChannelRealization,
                        counter: SolveCounter | None = None) -> np.ndarray:
    """Reference channel from a full wave-domain cascade.

    The external segments are folded in as transfer matrices (the feed side
    contributes blkdiag(0, h_it_sq^-1), the user side
    blkdiag(h_ri_sq^T, h_ri_sq^-1)), the three-factor chain is assembled as
    an explicit 2N x 2N product, and the channel is read out column by
    column: each basis excitation on the feed voltages yields one column of
    the user voltages via the (2,2) block. Intended for test-scale stacks;
    when K < N the externals are embedded invertibly and the K x K sub-block
    is returned.
    """
    _check_dims(stack, ch)
    n, k = ch.n, ch.users
    h_it_sq = _identity_completed(ch.h_it, n, axis=1)
    h_ri_sq = _identity_completed(ch.h_ri, n, axis=0)
    zero = np.zeros((n, n))

    t0_22 = solve(h_it_sq, np.eye(n), exc=NumericsError,
                  what="wave oracle (feed segment)")
    tl_22 = solve(h_ri_sq, np.eye(n), exc=NumericsError,
                  what="wave oracle (user segment)")
    t_feed = np.block([[zero, zero], [zero, t0_22]])
    t_user = np.block([[h_ri_sq.T, zero], [zero, tl_22]])

    t_full = t_feed @ t_chain(stack.transfer_elements()).full() @ t_user
    t22 = t_full[n:, n:]
    lu = _Factorization(t22, NonInvertibleTransfer, "wave oracle (T22)", counter)
    h_full = np.empty((n, n), dtype=np.complex128)
    for j in range(n):
        feed_voltages = np.zeros(n)
        feed_voltages[j] = 1.0
        user_voltages = lu.solve(feed_voltages)
        h_full[:, j] = user_voltages
    return h_full[:k, :k]
