"""Synthetic phantom generation and noncentral-chi noise corruption.

Phantoms are simple geometric objects (a uniform ball or concentric
spheres) on an exact-zero background, with the first volume acting as
the non-diffusion-weighted reference. Corruption draws N complex
Gaussian channels per voxel, splits the noiseless intensity evenly
across the real parts, and takes the root sum of squares, which yields
a noncentral chi magnitude signal with the requested degrees of freedom
and a spatially modulated noise level tau * sigma_g.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateDataError, DomainError
from .io import Volume4D

__all__ = [
    "PhantomSpec",
    "NoiseField",
    "build_phantom",
    "sigma_from_snr",
    "build_tau",
    "corrupt",
    "simulate",
    "object_mask",
]

GEOMETRIES = ("uniform_object", "concentric_spheres")
PROFILES = ("uniform", "sphere_ramp")

# Diffusion-weighted volumes carry attenuated copies of the reference
# intensity; the exact factor is irrelevant to noise estimation, which
# only ever samples the background.
_DWI_ATTENUATION = 0.5


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one synthetic dataset.

    ``b0_intensity`` sets the mean reference-volume intensity over the
    object, which together with ``snr`` fixes the noise level as
    sigma_g = b0_intensity / snr. The default pairs with snr=30 to give
    sigma_g = 171.
    """

    dims: tuple = (64, 64, 50)
    n_volumes: int = 65
    geometry: str = "uniform_object"
    snr: float = 30.0
    n_true: float = 4.0
    profile: str = "uniform"
    tau_max: float = 1.75
    seed: int = 0
    b0_intensity: float = 5130.0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) != d or d < 1 for d in self.dims):
            raise ConfigError(f"dims must be 3 positive integers, got {self.dims}")
        if int(self.n_volumes) != self.n_volumes or self.n_volumes < 1:
            raise ConfigError(f"n_volumes must be a positive integer, got {self.n_volumes}")
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry must be one of {GEOMETRIES}, got {self.geometry!r}")
        if not self.snr > 0.0:
            raise ConfigError(f"snr must be positive, got {self.snr}")
        if not self.n_true > 0.0:
            raise ConfigError(f"n_true must be positive, got {self.n_true}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if not self.tau_max >= 1.0:
            raise ConfigError(f"tau_max must be at least 1, got {self.tau_max}")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.b0_intensity > 0.0:
            raise ConfigError(f"b0_intensity must be positive, got {self.b0_intensity}")


@dataclass(frozen=True)
class NoiseField:
    """Spatial noise model: per-voxel modulation tau times base level sigma_g."""

    tau: np.ndarray
    sigma_g: float

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.float64)
        if tau.ndim != 3:
            raise DomainError(f"tau must be a 3D grid, got {tau.ndim} dimensions")
        if not np.all(tau >= 1.0):
            raise DomainError("tau must be at least 1 everywhere")
        if not self.sigma_g >= 0.0:
            raise DomainError(f"sigma_g must be nonnegative, got {self.sigma_g}")
        object.__setattr__(self, "tau", tau)


def _radius_grid(dims) -> np.ndarray:
    # Euclidean distance of each voxel center from the grid center.
    center = [(d - 1) / 2.0 for d in dims]
    axes = [np.arange(d, dtype=np.float64) - c for d, c in zip(dims, center)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.sqrt(gx * gx + gy * gy + gz * gz)


def _object_radius(dims) -> float:
    return 0.8 * (min(dims) / 2.0 - 1.0)


def object_mask(spec: PhantomSpec) -> np.ndarray:
    """Boolean grid marking the phantom object (True) vs background."""
    r_obj = _object_radius(spec.dims)
    if r_obj < 2.0:
        raise ConfigError(f"dims {spec.dims} are too small to hold the object")
    return _radius_grid(spec.dims) <= r_obj


def build_phantom(spec: PhantomSpec) -> Volume4D:
    """Construct the noiseless 4D phantom.

    The object sits at the grid center on an exact-zero background. For
    ``uniform_object`` every object voxel of the reference volume holds
    ``b0_intensity``; for ``concentric_spheres`` three nested plateaus
    are scaled so the object mean still equals ``b0_intensity``. Volumes
    after the first carry the same geometry at reduced intensity.
    """
    r = _radius_grid(spec.dims)
    r_obj = _object_radius(spec.dims)
    if r_obj < 2.0:
        raise ConfigError(f"dims {spec.dims} are too small to hold the object")
    inside = r <= r_obj

    b0 = np.zeros(spec.dims, dtype=np.float64)
    if spec.geometry == "uniform_object":
        b0[inside] = spec.b0_intensity
    else:
        # Plateau multipliers from outer shell to core, then normalized
        # so mean(b0 over object) = b0_intensity exactly.
        b0[inside] = 0.7
        b0[r <= 2.0 * r_obj / 3.0] = 1.0
        b0[r <= r_obj / 3.0] = 1.3
        b0 *= spec.b0_intensity / float(np.mean(b0[inside]))

    vols = np.empty(spec.dims + (spec.n_volumes,), dtype=np.float64)
    vols[..., 0] = b0
    if spec.n_volumes > 1:
        vols[..., 1:] = (_DWI_ATTENUATION * b0)[..., np.newaxis]
    return Volume4D(voxels=vols)


def sigma_from_snr(b0, snr: float) -> float:
    """Base noise level from the reference volume: mean over object / snr."""
    if not snr > 0.0:
        raise DomainError(f"snr must be positive, got {snr}")
    arr = np.asarray(b0, dtype=np.float64)
    obj = arr[arr > 0.0]
    if obj.size == 0:
        raise DegenerateDataError("reference volume has no object voxels")
    return float(np.mean(obj)) / snr


def build_tau(dims, profile: str, tau_max: float) -> np.ndarray:
    """Noise-modulation grid.

    ``uniform`` is 1 everywhere. ``sphere_ramp`` rises linearly with the
    distance from the grid center, from 1 at the center to ``tau_max``
    at the farthest corner.
    """
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES}, got {profile!r}")
    if not tau_max >= 1.0:
        raise ConfigError(f"tau_max must be at least 1, got {tau_max}")
    if profile == "uniform":
        return np.ones(tuple(dims), dtype=np.float64)
    r = _radius_grid(dims)
    r_max = float(np.max(r))
    if r_max == 0.0:
        return np.ones(tuple(dims), dtype=np.float64)
    return 1.0 + (tau_max - 1.0) * (r / r_max)


def corrupt(noiseless, field: NoiseField, n_true, seed: int) -> Volume4D:
    """Apply noncentral-chi noise to a noiseless volume.

    Each voxel value I becomes

        sqrt( sum_{i=1..N} (I/sqrt(N) + tau*eps_i)^2 + sum_{j=1..N} (tau*eps_j)^2 )

    with eps ~ Normal(0, sigma_g^2) drawn independently per voxel,
    volume and channel. Volume v consumes the v-th child stream of a
    counter-based generator seeded from ``seed``, with channel draws
    laid out deterministically inside each stream, so the output is
    reproducible and independent of any parallel schedule over volumes.

    ``n_true`` must be a positive integer; fractional degrees of freedom
    exist on the estimation side only.
    """
    if int(n_true) != n_true or n_true < 1:
        raise DomainError(f"noise generation needs a positive integer N, got {n_true}")
    n = int(n_true)
    vol = noiseless if isinstance(noiseless, Volume4D) else Volume4D(voxels=noiseless)
    data = vol.voxels
    if data.shape[:3] != np.asarray(field.tau).shape:
        raise DomainError(
            f"tau grid {np.asarray(field.tau).shape} does not match volume {data.shape[:3]}"
        )
    if field.sigma_g == 0.0:
        return Volume4D(voxels=data.copy(), spacing=vol.spacing, scale=vol.scale)

    scale = field.tau * field.sigma_g
    streams = np.random.SeedSequence(seed).spawn(data.shape[3])
    out = np.empty_like(data)
    inv_sqrt_n = 1.0 / np.sqrt(n)
    for v in range(data.shape[3]):
        rng = np.random.Generator(np.random.Philox(streams[v]))
        draws = rng.standard_normal((2 * n,) + data.shape[:3])
        signal = data[..., v] * inv_sqrt_n
        acc = np.zeros(data.shape[:3], dtype=np.float64)
        for i in range(n):
            acc += (signal + scale * draws[i]) ** 2
        for j in range(n, 2 * n):
            acc += (scale * draws[j]) ** 2
        out[..., v] = np.sqrt(acc)
    return Volume4D(voxels=out, spacing=vol.spacing, scale=vol.scale)


def simulate(spec: PhantomSpec):
    """Build, corrupt and describe one synthetic dataset.

    Returns
    -------
    (Volume4D, dict)
        The noisy volume and a ground-truth record holding the full
        spec echo plus the realized sigma_g.
    """
    phantom = build_phantom(spec)
    sigma_g = sigma_from_snr(phantom.voxels[..., 0], spec.snr)
    tau = build_tau(spec.dims, spec.profile, spec.tau_max)
    field = NoiseField(tau=tau, sigma_g=sigma_g)
    noisy = corrupt(phantom, field, spec.n_true, spec.seed)
    truth = {
        "schema": "chisigma-truth-v1",
        "sigma_g": sigma_g,
        "spec": asdict(spec),
    }
    truth["spec"]["dims"] = list(spec.dims)
    return noisy, truth
