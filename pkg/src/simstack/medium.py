"""Inter-layer transmission media and external fading segments.

Two medium providers build the coupling matrices between adjacent element
layers from the array geometry:

* ``dipole_medium`` - mutual impedances of parallel thin-wire dipoles with a
  sinusoidal current profile, via induced-EMF quadrature. Captures intra-layer
  coupling (the diagonal blocks) as well as the trans-layer terms.
* ``rs_medium`` - scalar diffraction transmission coefficients between square
  patches. No intra-layer reflection by construction, so the resulting medium
  satisfies the simplified-model premise exactly.

Both providers are deterministic functions of the geometry. The external
segments (feed-to-first-layer and last-layer-to-users) are i.i.d. unit-variance
circularly-symmetric Gaussian draws from a seeded generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.constants import c as SPEED_OF_LIGHT

from .multiport import IMPEDANCE, SCATTERING, BlockTwoPort, z_to_s

__all__ = [
    "ArrayGeometry",
    "GeometryDegenerate",
    "RsValidityWarning",
    "DipoleMediumProvider",
    "RayleighSommerfeldProvider",
    "PROVIDERS",
    "Z0_OHMS",
    "dipole_medium",
    "rs_medium",
    "external_segments",
    "sweep_geometry",
    "complex_normal",
    "wavelength_from_hz",
]

#: reference (characteristic) impedance for impedance-to-scattering conversion
Z0_OHMS = 50.0

ETA0 = 376.730313668  # free-space wave impedance, ohms

#: per-entry absolute quadrature tolerance for impedance entries, ohms
QUAD_TOL_OHMS = 1e-9


class GeometryDegenerate(Exception):
    """Two element centers coincide (or a propagation distance is zero)."""


class RsValidityWarning(UserWarning):
    """The diffraction-coefficient model is used outside its validity range
    (element area below one squared wavelength, or observation distance
    closer than two wavelengths)."""


def wavelength_from_hz(frequency_hz: float) -> float:
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    return SPEED_OF_LIGHT / frequency_hz


@dataclass(frozen=True)
class ArrayGeometry:
    """Regular per-layer element grid in the yz-plane, layers offset along x.

    ``n_y``/``n_z`` element counts along y and z (N = n_y * n_z), spacings in
    meters (``l_x`` between adjacent layers, ``l_y``/``l_z`` within a layer),
    thin-wire element length and radius, carrier wavelength, and the number
    of layers.
    """

    n_y: int
    n_z: int
    l_x: float
    l_y: float
    l_z: float
    dipole_length: float
    dipole_radius: float
    wavelength: float
    layer_count: int

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ValueError("element counts must be at least 1")
        for name in ("l_x", "l_y", "l_z", "dipole_length", "wavelength"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.dipole_radius < self.dipole_length:
            raise ValueError("dipole radius must be positive and below the length")
        if self.layer_count < 1:
            raise ValueError("need at least one layer")

    @property
    def n(self) -> int:
        """Elements per layer."""
        return self.n_y * self.n_z

    def element_positions(self, layer_index: int) -> np.ndarray:
        """(N, 3) element centers of the given layer (0-based), meters.

        Grids are centered on the x-axis; element order is z-major
        (index = iz * n_y + iy).
        """
        if not 0 <= layer_index < self.layer_count:
            raise IndexError("layer index out of range")
        iy = np.arange(self.n_y) - (self.n_y - 1) / 2.0
        iz = np.arange(self.n_z) - (self.n_z - 1) / 2.0
        yy, zz = np.meshgrid(iy * self.l_y, iz * self.l_z)
        pos = np.column_stack([
            np.full(self.n, layer_index * self.l_x),
            yy.ravel(),
            zz.ravel(),
        ])
        return pos


def sweep_geometry(layer_count: int, wavelength: float, *, total_elements: int = 72,
                   n_y: int = 6, dipole_length: float | None = None,
                   dipole_radius: float | None = None) -> ArrayGeometry:
    """Layer-sweep geometry with a fixed element budget.

    The element total is held at 72 while layers are added: N = 72 / L,
    n_y = 6, l_x = wavelength / (12 (L - 1)) (constant overall stack depth),
    l_y = wavelength / 2, l_z = 36 wavelength / (2 N).
    """
    if total_elements != 72:
        raise ValueError("the sweep geometry is defined for a 72-element budget")
    if layer_count < 2 or total_elements % layer_count:
        raise ValueError(f"layer count {layer_count} does not divide {total_elements}")
    n = total_elements // layer_count
    if n % n_y:
        raise ValueError(f"per-layer count {n} is not a multiple of n_y={n_y}")
    return ArrayGeometry(
        n_y=n_y,
        n_z=n // n_y,
        l_x=wavelength / (12 * (layer_count - 1)),
        l_y=wavelength / 2,
        l_z=36 * wavelength / (2 * n),
        dipole_length=dipole_length if dipole_length is not None else wavelength / 4,
        dipole_radius=dipole_radius if dipole_radius is not None else wavelength / 500,
        wavelength=wavelength,
        layer_count=layer_count,
    )


def _emf_kernel(d_lat, h, length, wavelength, order):
    """Fixed-order Gauss-Legendre evaluation of the induced-EMF integral for
    parallel z-aligned dipoles; vectorized over broadcastable (d_lat, h)."""
    k = 2 * np.pi / wavelength
    half = length / 2.0
    coskl2 = np.cos(k * half)
    nodes, weights = leggauss(order)
    # split at the current kink (z = 0); map [-1, 1] onto each half
    z = np.concatenate([0.5 * half * (nodes - 1.0), 0.5 * half * (nodes + 1.0)])
    w = np.concatenate([0.5 * half * weights, 0.5 * half * weights])
    d2 = np.asarray(d_lat, dtype=float)[..., None] ** 2
    zz = z + np.asarray(h, dtype=float)[..., None]
    r0 = np.sqrt(d2 + zz ** 2)
    r1 = np.sqrt(d2 + (zz - half) ** 2)
    r2 = np.sqrt(d2 + (zz + half) ** 2)
    kern = (np.exp(-1j * k * r1) / r1 + np.exp(-1j * k * r2) / r2
            - 2.0 * coskl2 * np.exp(-1j * k * r0) / r0)
    integral = np.sum(w * kern * np.sin(k * (half - np.abs(z))), axis=-1)
    return 1j * ETA0 / (4 * np.pi * np.sin(k * half) ** 2) * integral


def emf_mutual_impedance(d_lat, h, length, wavelength, *, tol=QUAD_TOL_OHMS):
    """Mutual impedance (ohms, input-referred) between parallel z-aligned
    thin-wire dipoles with sinusoidal current.

    ``d_lat`` is the lateral (xy-plane) center separation and ``h`` the axial
    (z) offset; both broadcast. Collinear elements (zero lateral separation)
    are fine as long as the wires do not overlap axially. The quadrature
    order is doubled until every entry moves by less than ``tol`` ohms.
    """
    d_lat = np.asarray(d_lat, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any((d_lat <= 0) & (np.abs(h) < length)):
        raise GeometryDegenerate("overlapping wire segments "
                                 "(use the wire radius for the self term)")
    order = 32
    prev = _emf_kernel(d_lat, h, length, wavelength, order)
    while order <= 1024:
        order *= 2
        cur = _emf_kernel(d_lat, h, length, wavelength, order)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise RuntimeError("induced-EMF quadrature did not converge")


def _pair_positions(geometry: ArrayGeometry, pair_index: int):
    if not 1 <= pair_index <= geometry.layer_count - 1:
        raise IndexError(f"pair index {pair_index} outside 1..{geometry.layer_count - 1}")
    return (geometry.element_positions(pair_index - 1),
            geometry.element_positions(pair_index))


def dipole_medium(geometry: ArrayGeometry, pair_index: int) -> BlockTwoPort:
    """Impedance matrix of the medium between layer pair ``pair_index``
    (1-based: pair l couples layers l and l+1).

    The diagonal blocks hold self impedances on their diagonals and
    intra-layer mutual coupling off-diagonal; the off-diagonal blocks hold
    the trans-layer mutual impedances, with Z12 = Z21^T by reciprocity.
    """
    pos_a, pos_b = _pair_positions(geometry, pair_index)
    length = geometry.dipole_length
    lam = geometry.wavelength

    def mutual_block(pos_to, pos_from, intra_layer):
        delta = pos_to[:, None, :] - pos_from[None, :, :]
        d_lat = np.hypot(delta[..., 0], delta[..., 1])
        h = delta[..., 2]
        distinct = ~np.eye(len(pos_to), dtype=bool) if intra_layer else True
        if np.any((d_lat == 0) & (h == 0) & distinct):
            raise GeometryDegenerate("two element centers coincide")
        if intra_layer:
            # the self impedance uses the wire radius as lateral offset
            np.fill_diagonal(d_lat, geometry.dipole_radius)
        return emf_mutual_impedance(d_lat, h, length, lam)

    z_intra_a = mutual_block(pos_a, pos_a, intra_layer=True)
    z_intra_b = mutual_block(pos_b, pos_b, intra_layer=True)
    z_cross = mutual_block(pos_b, pos_a, intra_layer=False)  # [m, n]: layer l -> l+1
    return BlockTwoPort(IMPEDANCE, z_intra_a, z_cross.T, z_cross, z_intra_b)


def rs_medium(geometry: ArrayGeometry, pair_index: int, *, warn: bool = True) -> BlockTwoPort:
    """Scattering matrix of the diffraction medium between a layer pair.

    No intra-layer reflection (S11 = S22 = 0); the forward block holds the
    scalar diffraction coefficient

        w = (A cos(chi) / d) (1 / (2 pi d) - j / lambda) exp(j 2 pi d / lambda)

    from each element of layer l to each element of layer l+1, with A the
    square-patch area (element length squared), d the center distance and
    chi the angle off the layer normal. S12 = S21^T by reciprocity.
    """
    pos_a, pos_b = _pair_positions(geometry, pair_index)
    lam = geometry.wavelength
    area = geometry.dipole_length ** 2
    delta = pos_b[:, None, :] - pos_a[None, :, :]
    d = np.linalg.norm(delta, axis=-1)
    if np.any(d == 0):
        raise GeometryDegenerate("zero propagation distance between layers")
    if warn and (area < lam ** 2 or d.min() < 2 * lam):
        warnings.warn(
            "diffraction coefficients used outside their validity range "
            f"(patch area {area:.3e} m^2 vs wavelength^2 {lam**2:.3e} m^2, "
            f"min distance {d.min():.3e} m vs 2*wavelength {2*lam:.3e} m)",
            RsValidityWarning, stacklevel=2)
    cos_chi = delta[..., 0] / d
    w = (area * cos_chi / d) * (1.0 / (2 * np.pi * d) - 1j / lam) * np.exp(2j * np.pi * d / lam)
    zero = np.zeros_like(w)
    return BlockTwoPort(SCATTERING, zero, w.T, w, zero)


@dataclass(frozen=True)
class DipoleMediumProvider:
    """Builds media from thin-wire mutual impedances, converted to
    scattering form against ``z0`` ohms."""

    z0: float = Z0_OHMS
    tag: str = "dipole"

    def impedance(self, geometry: ArrayGeometry, pair_index: int) -> BlockTwoPort:
        return dipole_medium(geometry, pair_index)

    def scattering(self, geometry: ArrayGeometry, pair_index: int) -> BlockTwoPort:
        return z_to_s(dipole_medium(geometry, pair_index), self.z0)


@dataclass(frozen=True)
class RayleighSommerfeldProvider:
    """Builds media from scalar diffraction coefficients (already in
    scattering form, reflection-free)."""

    warn: bool = True
    tag: str = "rayleigh-sommerfeld"

    def scattering(self, geometry: ArrayGeometry, pair_index: int) -> BlockTwoPort:
        return rs_medium(geometry, pair_index, warn=self.warn)


PROVIDERS = {
    "dipole": DipoleMediumProvider,
    "rayleigh-sommerfeld": RayleighSommerfeldProvider,
}


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def external_segments(geometry: ArrayGeometry, users: int, seed):
    """Draw the external fading segments for one realization.

    Returns ``(h_it, h_ri)``: the feed-to-first-layer matrix (N x K) and the
    last-layer-to-users matrix (K x N), both with i.i.d. unit-variance
    circularly-symmetric complex Gaussian entries. ``seed`` may be an int or
    a numpy Generator; a given seed always yields the same matrices.
    """
    if users < 1:
        raise ValueError("need at least one user")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = geometry.n
    h_it = complex_normal(rng, (n, users))
    h_ri = complex_normal(rng, (users, n))
    return h_it, h_ri
