"""Block-matrix algebra for balanced two-sided multiport networks.

A device with N ports on its input side and N ports on its output side is
described here by four N x N complex blocks, assembled as a 2N x 2N matrix.
Three representations share this layout:

* scattering: reflected waves = S @ incident waves, both sides stacked;
* transfer: input-side wave pair = T @ output-side wave pair, so a chain of
  devices multiplies out left to right;
* impedance: port voltages = Z @ port currents, in ohms.

The module provides the cascade rule for scattering matrices, the
scattering/transfer conversions, the impedance-to-scattering map, the
lossless/reciprocity constraint checks in both domains, and a factorization
counter so callers can audit how many N x N linear-system factorizations an
evaluation path performs.

All operations are pure; values are immutable after construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve

__all__ = [
    "BlockTwoPort",
    "ConstraintMatrices",
    "WaveVector",
    "SolveCounter",
    "NumericsError",
    "SingularCascade",
    "NonInvertibleTransmission",
    "NonInvertibleTransfer",
    "SingularShift",
    "cascade_s",
    "cascade_s_chain",
    "cascade_s21",
    "s_to_t",
    "t_to_s",
    "t_chain",
    "z_to_s",
    "check_unitary",
    "check_symmetric",
    "check_pseudo_unitary",
    "check_persymmetric",
    "count_inversions_s",
    "default_tolerance",
    "solve",
]

SCATTERING = "scattering"
TRANSFER = "transfer"
IMPEDANCE = "impedance"
_KINDS = (SCATTERING, TRANSFER, IMPEDANCE)

#: reciprocal condition number below which a factorization is rejected;
#: leaves two decades of headroom under the 1e-10 equivalence tolerances.
RCOND_FLOOR = 1e-12


class NumericsError(Exception):
    """Base class for numerical failures in the network algebra."""


class SingularCascade(NumericsError):
    """A cascade junction is resonant/ill-posed: an inner (I - X Y) matrix
    is numerically singular."""


class NonInvertibleTransmission(NumericsError):
    """The forward transmission block S21 is singular, i.e. the network has
    no through-path and its transfer representation is undefined."""


class NonInvertibleTransfer(NumericsError):
    """The T22 block is singular; the scattering representation (or the
    chain channel) cannot be recovered."""


class SingularShift(NumericsError):
    """(Z + Z0*I) is singular in the impedance-to-scattering conversion."""


class SolveCounter:
    """Accumulates the number of LU factorizations performed.

    A fresh counter is created per evaluation and threaded explicitly
    through the operations that accept one; there is no global state.
    Solving A^-1 B costs one factorization regardless of the number of
    right-hand-side columns.
    """

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def bump(self) -> None:
        self.count += 1

    def __repr__(self) -> str:
        return f"SolveCounter(count={self.count})"


class _Factorization:
    """Pivoted-LU factorization with a reciprocal-condition guard.

    Multiple solves against the same matrix share one (counted)
    factorization.
    """

    __slots__ = ("_lu", "_piv")

    def __init__(self, a, exc, what, counter=None):
        a = np.asarray(a, dtype=np.complex128)
        anorm = np.linalg.norm(a, 1) if a.size else 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(a, check_finite=False)
        gecon = get_lapack_funcs(("gecon",), (lu,))
        rcond, _info = gecon[0](lu, anorm, norm="1")
        if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
            raise exc(f"{what}: reciprocal condition {rcond:.3e} below {RCOND_FLOOR:g}")
        if counter is not None:
            counter.bump()
        self._lu = lu
        self._piv = piv

    def solve(self, b, trans: int = 0):
        """Solve A x = b (``trans=0``), A^T x = b (1) or A^H x = b (2)."""
        return lu_solve((self._lu, self._piv), np.asarray(b, dtype=np.complex128),
                        trans=trans, check_finite=False)


def solve(a, b, *, exc=NumericsError, what="linear system", counter=None):
    """Compute A^-1 B as a guarded LU solve (one counted factorization)."""
    return _Factorization(a, exc, what, counter).solve(b)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BlockTwoPort:
    """A balanced 2N-port matrix stored as its four N x N blocks.

    ``kind`` is one of ``"scattering"``, ``"transfer"``, ``"impedance"`` and
    is fixed at construction. Scattering/transfer entries are dimensionless
    wave ratios; impedance entries are ohms.
    """

    kind: str
    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {_KINDS}")
        blocks = [_frozen(b) for b in (self.b11, self.b12, self.b21, self.b22)]
        n = blocks[0].shape[0] if blocks[0].ndim == 2 else -1
        for b in blocks:
            if b.ndim != 2 or b.shape != (n, n):
                raise ValueError("all four blocks must be square with a common size")
        object.__setattr__(self, "b11", blocks[0])
        object.__setattr__(self, "b12", blocks[1])
        object.__setattr__(self, "b21", blocks[2])
        object.__setattr__(self, "b22", blocks[3])

    @property
    def n(self) -> int:
        """Port count per side."""
        return self.b11.shape[0]

    def block(self, i: int, j: int) -> np.ndarray:
        if i not in (1, 2) or j not in (1, 2):
            raise IndexError("block indices are 1 or 2")
        return getattr(self, f"b{i}{j}")

    def full(self) -> np.ndarray:
        """Assemble the 2N x 2N matrix (a new writable array)."""
        n = self.n
        out = np.empty((2 * n, 2 * n), dtype=np.complex128)
        out[:n, :n] = self.b11
        out[:n, n:] = self.b12
        out[n:, :n] = self.b21
        out[n:, n:] = self.b22
        return out

    @classmethod
    def from_full(cls, kind: str, m) -> "BlockTwoPort":
        m = np.asarray(m)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError("expected a square matrix of even dimension")
        n = m.shape[0] // 2
        return cls(kind, m[:n, :n], m[:n, n:], m[n:, :n], m[n:, n:])

    @classmethod
    def through(cls, n: int) -> "BlockTwoPort":
        """Ideal through-connection: no reflection, identity transmission."""
        z = np.zeros((n, n))
        i = np.eye(n)
        return cls(SCATTERING, z, i, i, z)


@dataclass(frozen=True)
class ConstraintMatrices:
    """The signature matrix blkdiag(I, -I) and the block-exchange matrix
    antidiag(I, I) used by the transfer-domain constraint checks. Both are
    involutory."""

    sigma: np.ndarray
    exchange: np.ndarray

    @classmethod
    def for_ports(cls, n: int) -> "ConstraintMatrices":
        i = np.eye(n)
        z = np.zeros((n, n))
        sigma = np.block([[i, z], [z, -i]])
        exchange = np.block([[z, i], [i, z]])
        sigma.setflags(write=False)
        exchange.setflags(write=False)
        return cls(sigma, exchange)


@dataclass(frozen=True)
class WaveVector:
    """Incident/reflected wave amplitudes at one side of a network, in
    square-root watts. ``side`` is ``"input"`` or ``"output"``."""

    incident: np.ndarray
    reflected: np.ndarray
    side: str

    def __post_init__(self):
        if self.side not in ("input", "output"):
            raise ValueError("side must be 'input' or 'output'")
        inc = _frozen(self.incident)
        ref = _frozen(self.reflected)
        if inc.shape != ref.shape or inc.ndim != 1:
            raise ValueError("incident and reflected must be 1-d of equal length")
        object.__setattr__(self, "incident", inc)
        object.__setattr__(self, "reflected", ref)

    @property
    def dim(self) -> int:
        return self.incident.shape[0]


def default_tolerance(n: int) -> float:
    """Scale-aware default tolerance for constraint checks on a 2N x 2N
    matrix: 1e-10 * sqrt(2N)."""
    return 1e-10 * np.sqrt(2 * n)


def _require_kind(m: BlockTwoPort, kind: str, op: str):
    if m.kind != kind:
        raise ValueError(f"{op} expects a {kind} matrix, got {m.kind}")


def cascade_s(p: BlockTwoPort, q: BlockTwoPort, counter: SolveCounter | None = None) -> BlockTwoPort:
    """Equivalent scattering matrix of two cascaded networks (P feeding Q).

    Implements the junction elimination

        R11 = P11 + P12 (I - Q11 P22)^-1 Q11 P21
        R12 = P12 (I - Q11 P22)^-1 Q12
        R21 = Q21 (I - P22 Q11)^-1 P21
        R22 = Q22 + Q21 (I - P22 Q11)^-1 P22 Q12

    using two LU factorizations (one per inner matrix). Raises
    SingularCascade when either inner matrix is numerically singular, which
    signals a resonant junction.
    """
    _require_kind(p, SCATTERING, "cascade_s")
    _require_kind(q, SCATTERING, "cascade_s")
    if p.n != q.n:
        raise ValueError(f"port-count mismatch: {p.n} vs {q.n}")
    n = p.n
    eye = np.eye(n)
    fa = _Factorization(eye - q.b11 @ p.b22, SingularCascade, "cascade (I - Q11 P22)", counter)
    fb = _Factorization(eye - p.b22 @ q.b11, SingularCascade, "cascade (I - P22 Q11)", counter)
    r11 = p.b11 + p.b12 @ fa.solve(q.b11 @ p.b21)
    r12 = p.b12 @ fa.solve(q.b12)
    r21 = q.b21 @ fb.solve(p.b21)
    r22 = q.b22 + q.b21 @ fb.solve(p.b22 @ q.b12)
    return BlockTwoPort(SCATTERING, r11, r12, r21, r22)


def cascade_s_chain(stack, counter: SolveCounter | None = None) -> BlockTwoPort:
    """Left fold of cascade_s over an ordered list of scattering matrices.

    Propagates SingularCascade annotated with the index of the failing
    junction (0-based, between stack[i] and stack[i+1]).
    """
    stack = list(stack)
    if not stack:
        raise ValueError("empty stack")
    acc = stack[0]
    for i, element in enumerate(stack[1:]):
        try:
            acc = cascade_s(acc, element, counter)
        except SingularCascade as e:
            raise SingularCascade(f"junction {i}: {e}") from e
    return acc


class _LazyCascade:
    """By-need evaluation of single blocks of a cascade of two networks.

    Each block request evaluates its defining formula afresh: operand blocks
    are re-derived per occurrence, with no reuse across or within formulas.
    This mirrors the fully expanded closed form of the requested block, so a
    threaded SolveCounter reports exactly the number of N x N inversions
    that expansion contains.
    """

    __slots__ = ("p", "q", "n")

    def __init__(self, p, q):
        self.p = p
        self.q = q
        self.n = p.n

    def block(self, i, j, counter):
        p, q = self.p, self.q
        eye = np.eye(self.n)
        if (i, j) == (2, 1):
            rhs = _get(p, 2, 1, counter)
            inner = eye - _get(p, 2, 2, counter) @ _get(q, 1, 1, counter)
            return _get(q, 2, 1, counter) @ solve(
                inner, rhs, exc=SingularCascade, what="cascade (I - P22 Q11)",
                counter=counter)
        if (i, j) == (2, 2):
            # P22 occurs twice in the expansion and is evaluated twice.
            inner = eye - _get(p, 2, 2, counter) @ _get(q, 1, 1, counter)
            rhs = _get(p, 2, 2, counter) @ _get(q, 1, 2, counter)
            return _get(q, 2, 2, counter) + _get(q, 2, 1, counter) @ solve(
                inner, rhs, exc=SingularCascade, what="cascade (I - P22 Q11)",
                counter=counter)
        if (i, j) == (1, 1):
            # Q11 occurs twice in the expansion and is evaluated twice.
            inner = eye - _get(q, 1, 1, counter) @ _get(p, 2, 2, counter)
            rhs = _get(q, 1, 1, counter) @ _get(p, 2, 1, counter)
            return _get(p, 1, 1, counter) + _get(p, 1, 2, counter) @ solve(
                inner, rhs, exc=SingularCascade, what="cascade (I - Q11 P22)",
                counter=counter)
        if (i, j) == (1, 2):
            inner = eye - _get(q, 1, 1, counter) @ _get(p, 2, 2, counter)
            return _get(p, 1, 2, counter) @ solve(
                inner, _get(q, 1, 2, counter), exc=SingularCascade,
                what="cascade (I - Q11 P22)", counter=counter)
        raise IndexError("block indices are 1 or 2")


def _get(node, i, j, counter):
    if isinstance(node, _LazyCascade):
        return node.block(i, j, counter)
    return node.block(i, j)


def _paired_tree(stack):
    """Cascade tree pairing each medium with the layer that follows it:
    S(...S(S(layer1, S(med1, layer2)), S(med2, layer3))...)."""
    stack = list(stack)
    if len(stack) % 2 == 0:
        raise ValueError("expected alternating layer/medium list of odd length")
    node = stack[0]
    for i in range(1, len(stack), 2):
        node = _LazyCascade(node, _LazyCascade(stack[i], stack[i + 1]))
    return node


def cascade_s21(stack, counter: SolveCounter | None = None) -> np.ndarray:
    """Forward transmission block (2,1) of a cascaded stack, evaluated
    by need.

    Only the sub-blocks the (2,1) expansion touches are computed; no full
    2N x 2N result is formed. The value equals
    ``cascade_s_chain(stack).block(2, 1)``; the factorization count equals
    the number of inversions in the expanded closed form of that block.
    """
    stack = list(stack)
    if not stack:
        raise ValueError("empty stack")
    if len(stack) == 1:
        return np.array(stack[0].block(2, 1))
    node = _paired_tree(stack)
    return node.block(2, 1, counter)


def s_to_t(s: BlockTwoPort, counter: SolveCounter | None = None) -> BlockTwoPort:
    """Convert a scattering matrix to its transfer (chain) form.

        T11 = S12 - S11 S21^-1 S22    T12 = S11 S21^-1
        T21 = -S21^-1 S22             T22 = S21^-1

    One factorization of S21; raises NonInvertibleTransmission when S21 is
    singular (a network with no through-path has no transfer form).
    """
    _require_kind(s, SCATTERING, "s_to_t")
    n = s.n
    f = _Factorization(s.b21, NonInvertibleTransmission, "s_to_t (S21)", counter)
    t22 = f.solve(np.eye(n))
    t21 = -f.solve(s.b22)
    t11 = s.b12 + s.b11 @ t21
    t12 = s.b11 @ t22
    return BlockTwoPort(TRANSFER, t11, t12, t21, t22)


def t_to_s(t: BlockTwoPort, counter: SolveCounter | None = None) -> BlockTwoPort:
    """Convert a transfer matrix back to scattering form.

        S11 = T12 T22^-1    S12 = T11 - T12 T22^-1 T21
        S21 = T22^-1        S22 = -T22^-1 T21

    One factorization of T22; raises NonInvertibleTransfer when T22 is
    singular.
    """
    _require_kind(t, TRANSFER, "t_to_s")
    n = t.n
    f = _Factorization(t.b22, NonInvertibleTransfer, "t_to_s (T22)", counter)
    s21 = f.solve(np.eye(n))
    s22 = -f.solve(t.b21)
    s11 = t.b12 @ s21
    s12 = t.b11 + t.b12 @ s22
    return BlockTwoPort(SCATTERING, s11, s12, s21, s22)


def t_chain(stack) -> BlockTwoPort:
    """Plain left-to-right product of transfer matrices.

    A chain of m elements costs exactly m - 1 multiplications of 2N x 2N
    matrices and no factorizations.
    """
    stack = list(stack)
    if not stack:
        raise ValueError("empty stack")
    for m in stack:
        _require_kind(m, TRANSFER, "t_chain")
    n = stack[0].n
    for m in stack:
        if m.n != n:
            raise ValueError(f"port-count mismatch: {m.n} vs {n}")
    acc = stack[0].full()
    for m in stack[1:]:
        acc = acc @ m.full()
    return BlockTwoPort.from_full(TRANSFER, acc)


def z_to_s(z: BlockTwoPort, z0: float, counter: SolveCounter | None = None) -> BlockTwoPort:
    """Convert an impedance matrix to scattering form against a real
    reference impedance z0 (ohms): S = (Z + z0 I)^-1 (Z - z0 I)."""
    _require_kind(z, IMPEDANCE, "z_to_s")
    if z0 <= 0:
        raise ValueError("reference impedance must be positive")
    zf = z.full()
    shift = z0 * np.eye(2 * z.n)
    s = solve(zf + shift, zf - shift, exc=SingularShift,
              what="z_to_s (Z + Z0 I)", counter=counter)
    return BlockTwoPort.from_full(SCATTERING, s)


def check_unitary(s: BlockTwoPort, tol: float | None = None) -> bool:
    """True iff ||S^H S - I||_F <= tol (lossless in the scattering domain)."""
    _require_kind(s, SCATTERING, "check_unitary")
    m = s.full()
    tol = default_tolerance(s.n) if tol is None else tol
    return bool(np.linalg.norm(m.conj().T @ m - np.eye(2 * s.n)) <= tol)


def check_symmetric(s: BlockTwoPort, tol: float | None = None) -> bool:
    """True iff ||S - S^T||_F <= tol (reciprocal in the scattering domain)."""
    _require_kind(s, SCATTERING, "check_symmetric")
    m = s.full()
    tol = default_tolerance(s.n) if tol is None else tol
    return bool(np.linalg.norm(m - m.T) <= tol)


def check_pseudo_unitary(g: BlockTwoPort, tol: float | None = None) -> bool:
    """True iff ||G^H Sigma G - Sigma||_F <= tol with Sigma = blkdiag(I, -I)
    (the transfer-domain image of losslessness)."""
    _require_kind(g, TRANSFER, "check_pseudo_unitary")
    m = g.full()
    sigma = ConstraintMatrices.for_ports(g.n).sigma
    tol = default_tolerance(g.n) if tol is None else tol
    return bool(np.linalg.norm(m.conj().T @ sigma @ m - sigma) <= tol)


def check_persymmetric(g: BlockTwoPort, tol: float | None = None) -> bool:
    """True iff ||G - J G* J||_F <= tol with J the block-exchange matrix
    (the transfer-domain image of reciprocity)."""
    _require_kind(g, TRANSFER, "check_persymmetric")
    m = g.full()
    j = ConstraintMatrices.for_ports(g.n).exchange
    tol = default_tolerance(g.n) if tol is None else tol
    return bool(np.linalg.norm(m - j @ m.conj() @ j) <= tol)


def count_inversions_s(layer_count: int) -> int:
    """Number of N x N factorizations performed when the forward
    transmission block of an L-layer stack is evaluated by need.

    The count is obtained by instrumentation: a generic random stack (the
    count is independent of the matrix values) is evaluated via cascade_s21
    with a fresh counter. Requires layer_count >= 2.
    """
    if layer_count < 2:
        raise ValueError("need at least two layers")
    rng = np.random.default_rng(0)
    n = 2

    def rand_s():
        m = rng.normal(size=(2 * n, 2 * n)) + 1j * rng.normal(size=(2 * n, 2 * n))
        q, _ = np.linalg.qr(m)
        return BlockTwoPort.from_full(SCATTERING, 0.6 * q)

    stack = [rand_s() for _ in range(2 * layer_count - 1)]
    counter = SolveCounter()
    cascade_s21(stack, counter)
    return counter.count
