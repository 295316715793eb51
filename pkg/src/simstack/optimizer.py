"""Sum-rate maximization over the stack's phase shifts.

Projected gradient ascent with Armijo backtracking on the L x N phase
matrix, under a fixed power allocation. The gradient is a central finite
difference of the sum rate through the selected channel model; phases are
wrapped back into [0, 2*pi) after every update, which is a no-op for the
objective since phases enter only through exp(j phase).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, SimStack, channel_exact_t, channel_simplified, wrap_phases
from .multiport import NonInvertibleTransfer, _Factorization, solve

__all__ = [
    "PhaseDesign",
    "OptimizerSettings",
    "PowerAllocation",
    "GdaResult",
    "sinr",
    "sum_rate",
    "gradient_fd",
    "gda_optimize",
    "init_phases",
    "uniform_power",
    "waterfilling_power",
    "CHANNEL_MODELS",
]

CHANNEL_MODELS = ("exact-t", "simplified")


@dataclass(frozen=True)
class PhaseDesign:
    """The design variable: an L x N matrix of per-element phase shifts,
    entries wrapped into [0, 2*pi)."""

    phi: np.ndarray

    def __post_init__(self):
        phi = wrap_phases(np.atleast_2d(self.phi))
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def layer_count(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class OptimizerSettings:
    """Ascent parameters.

    ``step0``/``backtrack``/``armijo_c`` control the Armijo search (accept
    the largest step0 * backtrack**m satisfying the sufficient-increase
    test), ``fd_step`` is the central-difference probe in radians, ``tol``
    stops the loop once the objective gain falls below it (0 disables), and
    ``channel_model`` selects what the objective is evaluated on.
    ``step_policy`` picks how each line search starts: ``fixed`` backtracks
    from ``step0`` itself, while ``restart``/``carryover`` are scale-free
    variants whose first trial moves the largest phase entry by ``step0``
    radians (see gda_optimize).
    """

    max_iters: int = 100
    step0: float = 1.0
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    fd_step: float = 1e-5
    tol: float = 0.0
    channel_model: str = "exact-t"
    backtrack_cap: int = 50
    grad_tol: float = 1e-9
    step_policy: str = "restart"

    def __post_init__(self):
        if self.step0 <= 0:
            raise ValueError("step0 must be positive")
        if self.step_policy not in ("fixed", "restart", "carryover"):
            raise ValueError("step_policy must be 'fixed', 'restart' or 'carryover'")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must be in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must be in (0, 1)")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.max_iters < 0 or self.backtrack_cap < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be nonnegative")
        if self.channel_model not in CHANNEL_MODELS:
            raise ValueError(f"channel_model must be one of {CHANNEL_MODELS}")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user transmit powers (watts). The budget is the exact sum."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("power vector must be 1-d and nonempty")
        if np.any(p < 0):
            raise ValueError("powers must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def users(self) -> int:
        return self.p.shape[0]

    @property
    def p_max(self) -> float:
        return float(self.p.sum())

    def diag_matrix(self) -> np.ndarray:
        """diag(sqrt(p)), the amplitude-scaling form applied to the symbols."""
        return np.diag(np.sqrt(self.p))


def uniform_power(users: int, p_max: float) -> PowerAllocation:
    """Split the budget evenly: p_k = p_max / K."""
    if users < 1:
        raise ValueError("need at least one user")
    if p_max <= 0:
        raise ValueError("power budget must be positive")
    return PowerAllocation(np.full(users, p_max / users))


def waterfilling_power(h: np.ndarray, noise_psd: float, p_max: float) -> PowerAllocation:
    """Water-filling on the per-user direct gains |h_kk|^2 / N0, ignoring
    interference. Users whose inverse gain exceeds the water level get zero;
    the budget is met exactly. All-zero gains fall back to a uniform split.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square channel matrix")
    if p_max <= 0 or noise_psd <= 0:
        raise ValueError("power budget and noise must be positive")
    gains = np.abs(np.diagonal(h)) ** 2 / noise_psd
    k = gains.size
    if np.all(gains == 0):
        return uniform_power(k, p_max)
    inv = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    order = np.argsort(inv)
    p = np.zeros(k)
    for m in range(k, 0, -1):
        active = order[:m]
        if not np.all(np.isfinite(inv[active])):
            continue
        level = (p_max + inv[active].sum()) / m
        if level > inv[active].max():
            p[active] = level - inv[active]
            break
    p *= p_max / p.sum()
    return PowerAllocation(p)


def sinr(h: np.ndarray, power: PowerAllocation, noise_psd: float, k: int) -> float:
    """Signal-to-interference-plus-noise ratio of user k:
    p_k |h_kk|^2 / (sum_{i != k} p_i |h_ki|^2 + N0)."""
    h = np.asarray(h)
    row = np.abs(h[k, :]) ** 2
    signal = power.p[k] * row[k]
    interference = float(row @ power.p) - signal
    return float(signal / (interference + noise_psd))


def sum_rate(h: np.ndarray, power: PowerAllocation, noise_psd: float) -> float:
    """Sum of log2(1 + sinr_k) over users, in bits/s/Hz."""
    mag = np.abs(np.asarray(h)) ** 2
    signal = power.p * mag.diagonal()
    interference = mag @ power.p - signal
    return float(np.log2(1.0 + signal / (interference + noise_psd)).sum())


def _chain_t22(phi: np.ndarray, media_full, n: int) -> np.ndarray:
    """(2,2) block of the transfer chain for phase matrix ``phi``.

    Walks the bottom row-block through the alternating diagonal/dense
    product; identical (bitwise) to assembling the full chain, since the
    layer matrices are exactly block-diagonal.
    """
    d0 = np.exp(1j * phi[0])
    v = np.zeros((n, 2 * n), dtype=np.complex128)
    v[:, n:][np.diag_indices(n)] = d0.conj()
    for l in range(1, phi.shape[0] + 1):
        if l - 1 < len(media_full):
            v = v @ media_full[l - 1]
        else:
            break
        d = np.exp(1j * phi[l])
        gain = np.concatenate([d, d.conj()])
        v = v * gain[None, :]
    return v[:, n:]


def _objective(stack: SimStack, ch: ChannelRealization, power: PowerAllocation,
               model: str):
    if model == "exact-t":
        n = stack.n
        media_full = [m.full() for m in stack.media_t]

        def f(phi):
            t22 = _chain_t22(np.atleast_2d(phi), media_full, n)
            h = ch.h_ri @ solve(t22, ch.h_it, exc=NonInvertibleTransfer,
                                what="channel chain (T22)")
            return sum_rate(h, power, ch.noise_psd)
    else:
        forward = [m.b21 for m in stack.media]

        def f(phi):
            phi = np.atleast_2d(phi)
            v = np.exp(1j * phi[0])[:, None] * ch.h_it
            for l, w in enumerate(forward):
                v = np.exp(1j * phi[l + 1])[:, None] * (w @ v)
            return sum_rate(ch.h_ri @ v, power, ch.noise_psd)

    return f


def _chain_cuts(stack: SimStack):
    """Partial chain products around every layer, keeping only the row and
    column groups the (2,2) block needs.

    With the chain written diag(g_0) M_0 diag(g_1) ... diag(g_{L-1}), the
    (2,2) block seen from layer l is
    pre_lo @ diag(d) @ suf_lo + pre_hi @ diag(d*) @ suf_hi, so replacing one
    phase entry is a rank-2 update of the block.
    """
    n = stack.n
    layer_count = stack.layer_count
    gains = [np.concatenate([d, d.conj()])
             for d in (layer.transmission_diag for layer in stack.layers)]
    media = [m.full() for m in stack.media_t]
    pre_lo, pre_hi = [], []
    pre = np.eye(2 * n, dtype=np.complex128)
    for l in range(layer_count):
        rows = pre[n:, :]
        pre_lo.append(np.ascontiguousarray(rows[:, :n]))
        pre_hi.append(np.ascontiguousarray(rows[:, n:]))
        if l < layer_count - 1:
            pre = (pre * gains[l][None, :]) @ media[l]
    suf_lo, suf_hi = [None] * layer_count, [None] * layer_count
    suf = np.eye(2 * n, dtype=np.complex128)
    for l in range(layer_count - 1, -1, -1):
        cols = suf[:, n:]
        suf_lo[l] = np.ascontiguousarray(cols[:n, :])
        suf_hi[l] = np.ascontiguousarray(cols[n:, :])
        if l > 0:
            suf = media[l - 1] @ (gains[l][:, None] * suf)
    return pre_lo, pre_hi, suf_lo, suf_hi


def _sum_rates_batch(h_batch: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    """Sum rate of every K x K channel in a (J, K, K) batch."""
    mag = np.abs(h_batch) ** 2
    k = mag.shape[-1]
    idx = np.arange(k)
    signal = p * mag[:, idx, idx]
    interference = mag @ p - signal
    return np.log2(1.0 + signal / (interference + noise)).sum(axis=1)


def _gradient_exact(stack: SimStack, ch: ChannelRealization, power: PowerAllocation,
                    step: float) -> np.ndarray:
    """Central differences through the transfer-chain channel.

    A single-entry phase change perturbs the chain's (2,2) block by a rank-2
    term, so every probe is evaluated from the factored base block via the
    Woodbury identity (closed-form 2x2 capacitance) instead of re-assembling
    and re-factoring the chain; all probes of a layer are batched.
    """
    phi = stack.phase_matrix
    layer_count, n = phi.shape
    pre_lo, pre_hi, suf_lo, suf_hi = _chain_cuts(stack)
    d0 = np.exp(1j * phi[0])
    t22 = (pre_lo[0] @ (d0[:, None] * suf_lo[0])
           + pre_hi[0] @ (d0.conj()[:, None] * suf_hi[0]))
    lu = _Factorization(t22, NonInvertibleTransfer, "channel chain (T22)")
    y0 = lu.solve(ch.h_it)                       # T22^-1 h_it
    h0 = ch.h_ri @ y0                            # base channel
    zt = lu.solve(ch.h_ri.T, trans=1).T          # h_ri T22^-1
    noise = ch.noise_psd
    p = power.p
    grad = np.empty((layer_count, n))
    rot = {1.0: np.exp(1j * step), -1.0: np.exp(-1j * step)}
    for l in range(layer_count):
        w_lo = lu.solve(pre_lo[l])               # T22^-1 U columns, all j at once
        w_hi = lu.solve(pre_hi[l])
        g11 = np.einsum("jn,nj->j", suf_lo[l], w_lo)
        g12 = np.einsum("jn,nj->j", suf_lo[l], w_hi)
        g21 = np.einsum("jn,nj->j", suf_hi[l], w_lo)
        g22 = np.einsum("jn,nj->j", suf_hi[l], w_hi)
        vy1 = suf_lo[l] @ y0                     # (N, K) rows are V^T y0
        vy2 = suf_hi[l] @ y0
        ru1 = (zt @ pre_lo[l]).T                 # (N, K) rows are h_ri T22^-1 u
        ru2 = (zt @ pre_hi[l]).T
        d = np.exp(1j * phi[l])
        values = {}
        for sign in (1.0, -1.0):
            c1 = d * (rot[sign] - 1.0)           # e^{j(phi+s h)} - e^{j phi}
            c2 = c1.conj()
            m11 = 1.0 + g11 * c1
            m12 = g12 * c2
            m21 = g21 * c1
            m22 = 1.0 + g22 * c2
            det = (m11 * m22 - m12 * m21)[:, None]
            w1 = c1[:, None] * (m22[:, None] * vy1 - m12[:, None] * vy2) / det
            w2 = c2[:, None] * (m11[:, None] * vy2 - m21[:, None] * vy1) / det
            h_batch = h0[None, :, :] - (ru1[:, :, None] * w1[:, None, :]
                                        + ru2[:, :, None] * w2[:, None, :])
            values[sign] = _sum_rates_batch(h_batch, p, noise)
        grad[l] = (values[1.0] - values[-1.0]) / (2 * step)
    return grad


def _gradient_simplified(stack: SimStack, ch: ChannelRealization,
                         power: PowerAllocation, step: float) -> np.ndarray:
    """Central differences through the forward-only channel; a single-entry
    phase change is a rank-1 update of the K x K channel, so all probes of a
    layer are batched."""
    phi = stack.phase_matrix
    layer_count, n = phi.shape
    forward = [m.b21 for m in stack.media]
    diags = [np.exp(1j * row) for row in phi]
    rights = [ch.h_it]                           # product right of layer l
    for l in range(layer_count - 1):
        rights.append(forward[l] @ (diags[l][:, None] * rights[l]))
    lefts = [None] * layer_count                 # product left of layer l
    left = ch.h_ri
    for l in range(layer_count - 1, -1, -1):
        lefts[l] = left
        if l > 0:
            left = (left * diags[l][None, :]) @ forward[l - 1]
    h0 = ch.h_ri @ (diags[-1][:, None] * rights[-1])
    noise = ch.noise_psd
    p = power.p
    grad = np.empty((layer_count, n))
    rot = {1.0: np.exp(1j * step), -1.0: np.exp(-1j * step)}
    for l in range(layer_count):
        bump = lefts[l].T[:, :, None] * rights[l][:, None, :]   # (N, K, K)
        values = {}
        for sign in (1.0, -1.0):
            c = (diags[l] * (rot[sign] - 1.0))[:, None, None]
            values[sign] = _sum_rates_batch(h0[None, :, :] + c * bump, p, noise)
        grad[l] = (values[1.0] - values[-1.0]) / (2 * step)
    return grad


def gradient_fd(stack: SimStack, ch: ChannelRealization, power: PowerAllocation,
                settings: OptimizerSettings) -> np.ndarray:
    """Central finite-difference gradient of the sum rate with respect to
    every phase entry: (f(phi + h) - f(phi - h)) / (2 h), elementwise; 2 L N
    channel evaluations. The evaluations are independent of each other and
    of their order; single-entry probes are evaluated through low-rank
    updates of the base channel, which is algebraically exact."""
    if settings.channel_model == "exact-t":
        return _gradient_exact(stack, ch, power, settings.fd_step)
    return _gradient_simplified(stack, ch, power, settings.fd_step)


@dataclass(frozen=True)
class GdaResult:
    """Ascent outcome: final design, per-iteration objective trace (the
    first entry is the starting objective), whether the line search stalled,
    and optionally every iterate's phase matrix."""

    design: PhaseDesign
    trace: np.ndarray
    stalled: bool = False
    iterates: tuple | None = None


def gda_optimize(stack0: SimStack, ch: ChannelRealization, power: PowerAllocation,
                 settings: OptimizerSettings, *, record_iterates: bool = False) -> GdaResult:
    """Gradient ascent with Armijo backtracking.

    Each accepted step satisfies
    f(phi + a g) >= f(phi) + armijo_c * a * ||g||^2, so the trace never
    decreases. If no backtracked step passes within ``backtrack_cap``
    halvings the current iterate is returned with ``stalled=True`` instead
    of raising.
    """
    f = _objective(stack0, ch, power, settings.channel_model)
    phi = stack0.phase_matrix
    current = f(phi)
    trace = [current]
    iterates = [phi.copy()] if record_iterates else None
    stalled = False
    last_alpha = 0.0
    for _ in range(settings.max_iters):
        grad = gradient_fd(stack0.with_phases(phi), ch, power, settings)
        gnorm2 = float((grad * grad).sum())
        ginf = float(np.abs(grad).max())
        if ginf <= settings.grad_tol:
            break
        # 'fixed' backtracks from a constant initial step every iteration;
        # the scale-free policies instead start from a trial that moves the
        # largest phase entry by step0 radians ('restart'), optionally
        # reusing the accepted step with one doubling of headroom
        # ('carryover'). The scale-free variants converge far faster on the
        # nearly flat landscapes of heavily attenuated stacks.
        if settings.step_policy == "fixed":
            alpha = settings.step0
        elif settings.step_policy == "carryover" and last_alpha > 0.0:
            alpha = 2.0 * last_alpha
        else:
            alpha = settings.step0 / ginf
        accepted = False
        for _m in range(settings.backtrack_cap + 1):
            candidate = wrap_phases(phi + alpha * grad)
            value = f(candidate)
            if value >= current + settings.armijo_c * alpha * gnorm2:
                accepted = True
                break
            alpha *= settings.backtrack
        if not accepted:
            stalled = True
            break
        last_alpha = alpha
        gain = value - current
        phi, current = candidate, value
        trace.append(current)
        if record_iterates:
            iterates.append(phi.copy())
        if settings.tol > 0 and gain < settings.tol:
            break
    return GdaResult(PhaseDesign(phi), np.asarray(trace), stalled,
                     tuple(iterates) if record_iterates else None)


def init_phases(stack: SimStack, ch: ChannelRealization, mode: str,
                seed=None) -> PhaseDesign:
    """Starting phases for the ascent.

    ``zeros`` and ``random`` are what they sound like (``random`` is
    deterministic per seed). ``simplified-mrt`` runs one sweep of
    coordinate ascent on the simplified channel, setting each phase in turn
    to the closed-form angle that maximizes the summed direct-channel power
    sum_k |H_kk|^2: the diagonal is affine in exp(j phase), so two probe
    evaluations per coordinate identify the optimal angle exactly.
    """
    layer_count, n = stack.layer_count, stack.n
    if mode == "zeros":
        return PhaseDesign(np.zeros((layer_count, n)))
    if mode == "random":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return PhaseDesign(rng.uniform(0.0, 2 * np.pi, size=(layer_count, n)))
    if mode != "simplified-mrt":
        raise ValueError(f"unknown init mode {mode!r}")

    phi = np.zeros((layer_count, n))
    for l in range(layer_count):
        for j in range(n):
            phi[l, j] = 0.0
            d0 = np.diagonal(channel_simplified(stack.with_phases(phi), ch))
            phi[l, j] = np.pi
            dpi = np.diagonal(channel_simplified(stack.with_phases(phi), ch))
            # diagonal is a + exp(j phase) b; the best phase aligns the sum
            a = (d0 + dpi) / 2.0
            b = (d0 - dpi) / 2.0
            w = np.sum(np.conj(a) * b)
            phi[l, j] = 0.0 if w == 0 else float(np.mod(-np.angle(w), 2 * np.pi))
    return PhaseDesign(phi)
