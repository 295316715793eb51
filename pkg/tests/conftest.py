"""Shared helpers: random network factories and the junction-continuity
oracle the cascade rule is checked against."""

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from simstack.multiport import SCATTERING, BlockTwoPort, WaveVector


@pytest.fixture(scope="session", autouse=True)
def single_threaded_blas():
    # the matrices in this suite are tiny; threaded BLAS only adds latency
    with threadpool_limits(limits=1, user_api="blas"):
        yield


def random_unitary(n, rng):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(m)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_scattering(n, rng, scale=0.6):
    """Random sub-unitary scattering matrix; the scaling keeps every cascade
    junction well away from resonance and every block well conditioned."""
    return BlockTwoPort.from_full(SCATTERING, scale * random_unitary(2 * n, rng))


def random_lossless_reciprocal(n, rng):
    """Random unitary symmetric scattering matrix (u @ u.T with u Haar
    unitary is both unitary and symmetric)."""
    u = random_unitary(2 * n, rng)
    return BlockTwoPort.from_full(SCATTERING, u @ u.T)


def random_stack_elements(layer_count, n, rng, scale=0.6):
    """Alternating layer/medium scattering list for a cascade chain."""
    return [random_scattering(n, rng, scale) for _ in range(2 * layer_count - 1)]


def junction_cascade_oracle(p: BlockTwoPort, q: BlockTwoPort) -> np.ndarray:
    """Equivalent scattering matrix of two cascaded networks, computed by
    solving the junction continuity equations directly.

    At the internal junction the waves leaving network P's output ports are
    the waves entering network Q's input ports and vice versa. For each
    external basis excitation we solve the 2N x 2N linear system in the
    junction waves and read off the external reflected waves; this never
    uses the block cascade formula.
    """
    n = p.n
    eye = np.eye(n)
    m = np.block([[eye, -q.b11], [-p.b22, eye]])
    full = np.zeros((2 * n, 2 * n), dtype=complex)
    for col in range(2 * n):
        excitation = np.zeros(2 * n, dtype=complex)
        excitation[col] = 1.0
        a_ip, a_oq = excitation[:n], excitation[n:]
        rhs = np.concatenate([q.b12 @ a_oq, p.b21 @ a_ip])
        x = np.linalg.solve(m, rhs)
        junction_out = WaveVector(incident=x[:n], reflected=x[n:], side="output")
        junction_in = WaveVector(incident=x[n:], reflected=x[:n], side="input")
        b_ip = p.b11 @ a_ip + p.b12 @ junction_out.incident
        b_oq = q.b21 @ junction_in.incident + q.b22 @ a_oq
        full[:, col] = np.concatenate([b_ip, b_oq])
    return full


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
