"""One-ring scattering channel generator and dataset files.

Geometry: APs and users drop independently, uniformly over a disk of radius
``cell_radius``. Each user carries ``scatterers`` points placed uniformly on
a ring of radius ``ring_radius`` around it. A path from AP i via scatterer n
of user k has total length d + ring_radius (d the AP-scatterer distance),
gain 1 / (1 + ((d + ring_radius)/d0)**pathloss_exp), deterministic phase
-2*pi*(d + ring_radius)/wavelength and one shared random phase per
scatterer. Summing paths per user and normalizing by sqrt(scatterers) gives
the (m, k) channel matrix, column per user.

Constraints per sample: transmit power budget P drawn log-uniformly (dB
uniform) from [p_min, p_max], fronthaul capacity C uniformly from
[c_min, c_max].
"""

import struct
from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .errors import ConfigurationError, DatasetFormatError

DATASET_MAGIC = b"CRBD"
DATASET_VERSION = 1


@dataclass(frozen=True)
class OneRingParams:
    """Scattering-ring channel geometry constants (meters where relevant)."""

    d0: float = 30.0
    ring_radius: float = 5.0
    pathloss_exp: float = 3.0
    scatterers: int = 2
    wavelength: float = 0.15
    cell_radius: float = 100.0

    def __post_init__(self):
        if self.d0 <= 0 or self.ring_radius < 0 or self.cell_radius <= 0:
            raise ConfigurationError("distances must be positive")
        if self.scatterers < 1:
            raise ConfigurationError("need at least one scatterer per user")
        if self.wavelength <= 0 or self.pathloss_exp <= 0:
            raise ConfigurationError("wavelength and pathloss exponent must be positive")


@dataclass(frozen=True)
class ConstraintBounds:
    """Sampling ranges for the per-sample power budget and fronthaul capacity."""

    p_min: float = 1.0
    p_max: float = 1e3
    c_min: float = 2.0
    c_max: float = 10.0

    def __post_init__(self):
        if not (0 < self.p_min <= self.p_max):
            raise ConfigurationError(f"invalid power range [{self.p_min}, {self.p_max}]")
        if not (0 < self.c_min <= self.c_max):
            raise ConfigurationError(f"invalid capacity range [{self.c_min}, {self.c_max}]")


@dataclass(frozen=True, eq=False)
class Geometry:
    """Dropped positions: ``ap_xy`` (m, 2), ``ue_xy`` (k, 2), ``scatterer_xy`` (k, n, 2)."""

    ap_xy: np.ndarray
    ue_xy: np.ndarray
    scatterer_xy: np.ndarray


@dataclass(frozen=True, eq=False)
class ChannelSample:
    """One system draw: channel ``h`` (m, k) complex128, power budget, capacity."""

    h: np.ndarray
    power_budget: float
    capacity: float

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def k(self) -> int:
        return self.h.shape[1]


def _disk_points(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    # area-uniform: radius via sqrt of a uniform
    r = radius * np.sqrt(rng.random(n))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack((r * np.cos(th), r * np.sin(th)))


def sample_geometry(rng: np.random.Generator, m: int, k: int, params: OneRingParams) -> Geometry:
    """Drop APs, users and per-user scattering rings.

    Draw order is fixed (APs, users, scatterer angles) so a seeded ``rng``
    reproduces the same geometry.
    """
    if m < 1 or k < 1:
        raise ConfigurationError("need at least one AP and one user")
    ap = _disk_points(rng, m, params.cell_radius)
    ue = _disk_points(rng, k, params.cell_radius)
    ang = rng.uniform(0.0, 2.0 * np.pi, (k, params.scatterers))
    offset = params.ring_radius * np.stack((np.cos(ang), np.sin(ang)), axis=-1)
    scat = ue[:, None, :] + offset
    return Geometry(ap_xy=ap, ue_xy=ue, scatterer_xy=scat)


def pathloss(propagation_distance, params: OneRingParams):
    """Path gain 1 / (1 + (d/d0)**eta) for total path length ``d`` (scalar or array)."""
    d = np.asarray(propagation_distance, dtype=np.float64)
    out = 1.0 / (1.0 + (d / params.d0) ** params.pathloss_exp)
    return float(out) if out.ndim == 0 else out


def one_ring_channel(geometry: Geometry, rng: np.random.Generator, params: OneRingParams) -> np.ndarray:
    """Draw scatterer phases and assemble the (m, k) channel matrix."""
    k, n = geometry.scatterer_xy.shape[:2]
    rho = rng.uniform(0.0, 2.0 * np.pi, (k, n))
    return kernels.one_ring_channel_kernel(
        np.ascontiguousarray(geometry.ap_xy, dtype=np.float64),
        np.ascontiguousarray(geometry.scatterer_xy, dtype=np.float64),
        np.ascontiguousarray(rho),
        params.d0,
        params.ring_radius,
        params.pathloss_exp,
        params.wavelength,
    )


def sample_constraints(rng: np.random.Generator, bounds: ConstraintBounds) -> tuple[float, float]:
    """Draw (power budget, fronthaul capacity); power is uniform in dB."""
    p_db = rng.uniform(10.0 * np.log10(bounds.p_min), 10.0 * np.log10(bounds.p_max))
    capacity = rng.uniform(bounds.c_min, bounds.c_max)
    return float(10.0 ** (p_db / 10.0)), float(capacity)


def _as_entropy(seed):
    if isinstance(seed, (tuple, list)):
        return [int(x) for x in seed]
    return int(seed)


def sample_rng(seed, index: int) -> np.random.Generator:
    """Independent per-sample stream: same (seed, index) -> same stream."""
    ss = np.random.SeedSequence(entropy=_as_entropy(seed), spawn_key=(int(index),))
    return np.random.default_rng(ss)


def generate_dataset(
    n: int,
    m: int,
    k: int,
    params: OneRingParams | None = None,
    bounds: ConstraintBounds | None = None,
    seed=0,
) -> list[ChannelSample]:
    """Generate ``n`` independent samples, reproducible from ``seed``.

    Sample i is drawn from its own spawned stream, so the result does not
    depend on generation order or batching.
    """
    if n < 0:
        raise ConfigurationError("sample count must be nonnegative")
    params = params or OneRingParams()
    bounds = bounds or ConstraintBounds()
    out = []
    for i in range(n):
        rng = sample_rng(seed, i)
        geo = sample_geometry(rng, m, k, params)
        h = one_ring_channel(geo, rng, params)
        power, capacity = sample_constraints(rng, bounds)
        out.append(ChannelSample(h=h, power_budget=power, capacity=capacity))
    return out


def interleave_complex(h: np.ndarray) -> np.ndarray:
    """Flatten (m, k) complex to (2mk,) float64: Re/Im interleaved, column-major."""
    col = h.ravel(order="F")
    out = np.empty(2 * col.size)
    out[0::2] = col.real
    out[1::2] = col.imag
    return out


def _deinterleave_complex(flat: np.ndarray, m: int, k: int) -> np.ndarray:
    col = flat[0::2] + 1j * flat[1::2]
    return col.reshape((m, k), order="F")


def save_dataset(
    path,
    samples: list[ChannelSample],
    params: OneRingParams | None = None,
    bounds: ConstraintBounds | None = None,
    seed=None,
) -> None:
    """Write samples to ``path`` (binary) plus a ``<path>.txt`` header sidecar.

    Layout: magic ``CRBD``, u16 version, u32 m, k, n (little endian), then per
    sample 2mk float64 (Re/Im interleaved, column-major by user) followed by
    float64 power budget and capacity.
    """
    if not samples:
        raise ConfigurationError("refusing to write an empty dataset")
    m, k = samples[0].m, samples[0].k
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHIII", DATASET_MAGIC, DATASET_VERSION, m, k, len(samples)))
        for s in samples:
            if s.h.shape != (m, k):
                raise ConfigurationError("inconsistent sample shapes in dataset")
            rec = np.empty(2 * m * k + 2)
            rec[: 2 * m * k] = interleave_complex(s.h)
            rec[-2] = s.power_budget
            rec[-1] = s.capacity
            f.write(rec.astype("<f8").tobytes())
    lines = [
        f"format={DATASET_MAGIC.decode()}",
        f"version={DATASET_VERSION}",
        f"m={m}",
        f"k={k}",
        f"n={len(samples)}",
    ]
    if seed is not None:
        lines.append(f"seed={seed}")
    for obj in (params or OneRingParams(), bounds or ConstraintBounds()):
        for fld in fields(obj):
            lines.append(f"{fld.name}={getattr(obj, fld.name)!r}")
    with open(str(path) + ".txt", "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path) -> tuple[list[ChannelSample], dict]:
    """Read a dataset written by :func:`save_dataset`; returns (samples, header)."""
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sHIII"))
        if len(head) < struct.calcsize("<4sHIII"):
            raise DatasetFormatError("truncated dataset header")
        magic, version, m, k, n = struct.unpack("<4sHIII", head)
        if magic != DATASET_MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}")
        if version != DATASET_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {version}")
        rec_len = 2 * m * k + 2
        body = np.frombuffer(f.read(), dtype="<f8")
    if body.size != n * rec_len:
        raise DatasetFormatError(
            f"expected {n * rec_len} float64 values, found {body.size}"
        )
    samples = []
    for i in range(n):
        rec = body[i * rec_len : (i + 1) * rec_len]
        samples.append(
            ChannelSample(
                h=_deinterleave_complex(rec[: 2 * m * k], m, k),
                power_budget=float(rec[-2]),
                capacity=float(rec[-1]),
            )
        )
    header = {"m": m, "k": k, "n": n, "version": version}
    return samples, header
