"""Shoebox-room scenario sampling, image-method impulse responses and level-controlled mixing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, fftconvolve, filtfilt

from .signal_core import MultichannelWaveform

SPEED_OF_SOUND = 343.0

# symmetric linear array, inter-mic gaps in cm
DEFAULT_MIC_GAPS_CM = (7, 6, 5, 4, 3, 2, 1, 1, 2, 3, 4, 5, 6, 7)

# half width of the fractional-delay filter (81 taps total)
_SINC_HALF = 40
_SUBSAMPLE_RESOLUTION = 64

# cutoff of the DC-removal high-pass applied to reverberant impulse responses;
# with a uniform positive reflection coefficient the dense image tail piles up
# coherently at DC, which the filter removes (standard image-method practice)
_RIR_HIGHPASS_HZ = 80.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone coordinates relative to the array origin, plus the reference channel."""

    mic_positions: np.ndarray  # [num_mics, 3] meters
    reference_index: int = 0

    def __post_init__(self):
        positions = np.asarray(self.mic_positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] < 1:
            raise ValueError("mic_positions must be an [num_mics, 3] array")
        if not np.isfinite(positions).all():
            raise ValueError("mic positions must be finite")
        if not 0 <= self.reference_index < positions.shape[0]:
            raise ValueError("reference_index out of range")
        object.__setattr__(self, "mic_positions", positions)

    @classmethod
    def default(cls) -> "ArrayGeometry":
        """15-channel symmetric linear array on the x axis, centered at the origin."""
        gaps = np.asarray(DEFAULT_MIC_GAPS_CM, dtype=np.float64) / 100.0
        x = np.concatenate([[0.0], np.cumsum(gaps)])
        x -= x.mean()
        positions = np.zeros((len(x), 3))
        positions[:, 0] = x
        return cls(positions, reference_index=0)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    def axis_coordinates(self) -> np.ndarray:
        """Scalar mic coordinates along the array axis; raises if the array is not linear."""
        centered = self.mic_positions - self.mic_positions.mean(axis=0)
        if self.num_mics < 2:
            raise ValueError("microphone array is not linear")
        _, svals, vh = np.linalg.svd(centered, full_matrices=False)
        if svals[0] <= 0 or (len(svals) > 1 and svals[1] > 1e-8 * svals[0]):
            raise ValueError("microphone array is not linear")
        axis = vh[0]
        coords = centered @ axis
        if coords[-1] < coords[0]:
            coords = -coords
        return coords


@dataclass
class RoomScenario:
    """One sampled acoustic scene; angles are degrees from the array axis."""

    room_dims: tuple[float, float, float]
    t60: float
    array_center: tuple[float, float, float]
    target_pos: tuple[float, float, float]
    interferer_pos: tuple[float, float, float]
    noise_pos: tuple[float, float, float]
    target_angle: float
    interferer_angle: float
    snr: float
    sir: float
    overlap_ratio: float
    seed: int

    def __post_init__(self):
        self.room_dims = tuple(float(v) for v in self.room_dims)
        for name in ("array_center", "target_pos", "interferer_pos", "noise_pos"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        if any(v <= 0 for v in self.room_dims):
            raise ValueError("room dimensions must be positive")
        if self.t60 < 0:
            raise ValueError("t60 must be non-negative")
        if not 0.0 <= self.overlap_ratio <= 1.0:
            raise ValueError("overlap_ratio must lie in [0, 1]")
        for name in ("target_pos", "interferer_pos", "noise_pos", "array_center"):
            pos = getattr(self, name)
            if not all(0 < p < d for p, d in zip(pos, self.room_dims)):
                raise ValueError(f"{name} lies outside the room")

    @property
    def angle_difference(self) -> float:
        return abs(self.target_angle - self.interferer_angle)

    def to_dict(self) -> dict:
        return {
            "room_dims": list(self.room_dims),
            "t60": self.t60,
            "array_center": list(self.array_center),
            "target_pos": list(self.target_pos),
            "interferer_pos": list(self.interferer_pos),
            "noise_pos": list(self.noise_pos),
            "target_angle": self.target_angle,
            "interferer_angle": self.interferer_angle,
            "snr": self.snr,
            "sir": self.sir,
            "overlap_ratio": self.overlap_ratio,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoomScenario":
        return cls(
            room_dims=tuple(data["room_dims"]),
            t60=data["t60"],
            array_center=tuple(data["array_center"]),
            target_pos=tuple(data["target_pos"]),
            interferer_pos=tuple(data["interferer_pos"]),
            noise_pos=tuple(data["noise_pos"]),
            target_angle=data["target_angle"],
            interferer_angle=data["interferer_angle"],
            snr=data["snr"],
            sir=data["sir"],
            overlap_ratio=data["overlap_ratio"],
            seed=data["seed"],
        )


@dataclass(frozen=True)
class SimulationConfig:
    """Scenario sampling ranges; defaults follow the simulated-corpus recipe."""

    room_min: tuple[float, float, float] = (4.0, 4.0, 3.0)
    room_max: tuple[float, float, float] = (10.0, 10.0, 6.0)
    t60_range: tuple[float, float] = (0.14, 0.92)
    snr_choices: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    sir_choices: tuple[float, ...] = (-6.0, 0.0, 6.0)
    distance_range: tuple[float, float] = (1.0, 5.0)
    angle_bins: tuple[tuple[float, float], ...] = ((0.0, 15.0), (15.0, 45.0), (45.0, 90.0), (90.0, 180.0))
    overlap_ratio: float = 0.8
    wall_margin: float = 0.2

    def __post_init__(self):
        if not all(lo <= hi for lo, hi in zip(self.room_min, self.room_max)):
            raise ValueError("room_min must not exceed room_max")
        if not 0 < self.t60_range[0] <= self.t60_range[1]:
            raise ValueError("invalid t60 range")
        if len(self.snr_choices) == 0 or len(self.sir_choices) == 0:
            raise ValueError("snr/sir choice sets must be non-empty")
        if not 0 < self.distance_range[0] <= self.distance_range[1]:
            raise ValueError("invalid distance range")
        if len(self.angle_bins) == 0 or not all(lo < hi for lo, hi in self.angle_bins):
            raise ValueError("invalid angle bins")
        if not 0.0 <= self.overlap_ratio <= 1.0:
            raise ValueError("overlap_ratio must lie in [0, 1]")

    def angle_bin_label(self, angle_difference: float) -> str:
        for lo, hi in self.angle_bins:
            if lo <= angle_difference < hi:
                return f"{lo:g}-{hi:g}"
        raise ValueError(f"angle difference {angle_difference} falls in no bin")


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int
    direct_path_delay: float  # samples

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1:
            raise ValueError("taps must be one-dimensional")
        if not np.isfinite(taps).all():
            raise ValueError("impulse response contains non-finite taps")
        if len(taps) < self.direct_path_delay:
            raise ValueError("impulse response shorter than its direct path delay")
        self.taps = taps


def sample_scenario(config: SimulationConfig, seed: int) -> RoomScenario:
    """Draw one scenario; deterministic given the seed.

    Draw order: room dims, T60, SNR, SIR, angle-difference bin, then source
    geometry (re-drawn until every source fits inside the room, up to 1000
    attempts).
    """
    rng = np.random.default_rng(seed)
    room = tuple(rng.uniform(lo, hi) for lo, hi in zip(config.room_min, config.room_max))
    t60 = float(rng.uniform(*config.t60_range))
    snr = float(config.snr_choices[rng.integers(len(config.snr_choices))])
    sir = float(config.sir_choices[rng.integers(len(config.sir_choices))])
    bin_lo, bin_hi = config.angle_bins[rng.integers(len(config.angle_bins))]

    margin = config.wall_margin
    # array spans ~0.6 m along x; keep the whole aperture inside the walls
    array_margin_x = margin + 0.3
    for _ in range(1000):
        center = (
            rng.uniform(array_margin_x, room[0] - array_margin_x),
            rng.uniform(margin, room[1] - margin),
            rng.uniform(0.5, room[2] - 0.5),
        )
        theta_t = float(rng.uniform(0.0, 180.0))
        delta = float(rng.uniform(bin_lo, bin_hi))
        sign = 1.0 if rng.integers(2) == 0 else -1.0
        theta_i = theta_t + sign * delta
        if not 0.0 <= theta_i <= 180.0:
            theta_i = theta_t - sign * delta
        if not 0.0 <= theta_i <= 180.0:
            continue
        dist_t = float(rng.uniform(*config.distance_range))
        dist_i = float(rng.uniform(*config.distance_range))
        theta_n = float(rng.uniform(0.0, 180.0))
        dist_n = float(rng.uniform(*config.distance_range))

        positions = {}
        ok = True
        for name, theta, dist in (
            ("target", theta_t, dist_t),
            ("interferer", theta_i, dist_i),
            ("noise", theta_n, dist_n),
        ):
            rad = np.radians(theta)
            pos = (
                center[0] + dist * np.cos(rad),
                center[1] + dist * np.sin(rad),
                center[2],
            )
            if not all(margin < p < d - margin for p, d in zip(pos, room)):
                ok = False
                break
            positions[name] = pos
        if not ok:
            continue
        return RoomScenario(
            room_dims=room,
            t60=t60,
            array_center=center,
            target_pos=positions["target"],
            interferer_pos=positions["interferer"],
            noise_pos=positions["noise"],
            target_angle=theta_t,
            interferer_angle=theta_i,
            snr=snr,
            sir=sir,
            overlap_ratio=config.overlap_ratio,
            seed=int(seed),
        )
    raise ValueError("could not place sources inside the room after 1000 attempts")


def _reflection_coefficient(room_dims, t60: float) -> float:
    """Uniform wall amplitude reflection coefficient for a target T60 (Eyring)."""
    if t60 == 0.0:
        return 0.0
    lx, ly, lz = room_dims
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 1.0 - np.exp(-0.161 * volume / (surface * t60))
    if alpha >= 1.0:
        raise ValueError("infeasible T60")
    return float(np.sqrt(1.0 - alpha))


def _axis_images(source: float, length: float, max_order: int, max_coord: float):
    """Per-axis image coordinates and reflection counts within reach."""
    n_reach = int(np.ceil((max_coord + length) / (2.0 * length))) + 1
    n_max = min(max_order, n_reach)
    n = np.arange(-n_max, n_max + 1)
    coords = []
    counts = []
    for p in (0, 1):
        coords.append((1 - 2 * p) * source + 2.0 * n * length)
        counts.append(np.abs(n - p) + np.abs(n))
    return np.concatenate(coords), np.concatenate(counts)


def _fractional_kernels(resolution: int) -> np.ndarray:
    """Hann-windowed sinc kernels (81 taps) for each quantized sub-sample offset."""
    k = np.arange(-_SINC_HALF, _SINC_HALF + 1, dtype=np.float64)
    width = 2 * _SINC_HALF + 1
    kernels = np.zeros((resolution, width))
    for idx in range(resolution):
        t = k - idx / resolution
        window = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / width))
        kernels[idx] = window * np.sinc(t)
    return kernels


_KERNEL_CACHE: dict[int, np.ndarray] = {}


def _kernels(resolution: int) -> np.ndarray:
    if resolution not in _KERNEL_CACHE:
        _KERNEL_CACHE[resolution] = _fractional_kernels(resolution)
    return _KERNEL_CACHE[resolution]


def default_max_order(room_dims, t60: float) -> int:
    order = int(np.ceil(SPEED_OF_SOUND * t60 / min(room_dims))) + 1
    return min(order, 40)


def simulate_rirs(
    room_dims,
    source_pos,
    mic_positions,
    t60: float,
    sample_rate: int,
    max_order: int | None = None,
) -> list[ImpulseResponse]:
    """Image-method impulse responses from one source to each microphone.

    Uniform Eyring wall reflection, 1/(4*pi*d) spreading, and fractional
    delays realized with an 81-tap Hann-windowed sinc evaluated on a
    1/64-sample grid.
    """
    room = np.asarray(room_dims, dtype=np.float64)
    source = np.asarray(source_pos, dtype=np.float64)
    mics = np.atleast_2d(np.asarray(mic_positions, dtype=np.float64))
    if not np.all((source > 0) & (source < room)):
        raise ValueError("source position lies outside the room")
    if not np.all((mics > 0) & (mics < room)):
        raise ValueError("microphone position lies outside the room")
    if t60 < 0:
        raise ValueError("t60 must be non-negative")

    direct_dist = np.linalg.norm(mics - source, axis=1)
    if np.any(direct_dist < 0.01):
        raise ValueError("microphone too close to source")

    beta = _reflection_coefficient(room, t60)
    if max_order is None:
        max_order = default_max_order(room, t60)

    fs = sample_rate
    direct_delay = direct_dist * fs / SPEED_OF_SOUND
    npts = int(np.ceil(t60 * fs) + np.ceil(direct_delay.max()) + 2 * _SINC_HALF + 2)

    if beta == 0.0:
        images = source[None, :]
        amplitudes = np.ones(1)
    else:
        array_center = mics.mean(axis=0)
        aperture = np.linalg.norm(mics - array_center, axis=1).max()
        max_dist = (npts + _SINC_HALF) * SPEED_OF_SOUND / fs + aperture
        coords, counts, valid = [], [], True
        for axis in range(3):
            c, n = _axis_images(source[axis], room[axis], max_order, max_dist + abs(array_center[axis]))
            coords.append(c)
            counts.append(n)
        dx = coords[0][:, None, None] - array_center[0]
        dy = coords[1][None, :, None] - array_center[1]
        dz = coords[2][None, None, :] - array_center[2]
        dist_sq = dx**2 + dy**2 + dz**2
        keep = dist_sq <= (max_dist + aperture) ** 2
        idx = np.nonzero(keep)
        images = np.stack(
            [coords[0][idx[0]], coords[1][idx[1]], coords[2][idx[2]]], axis=1
        )
        total_counts = counts[0][idx[0]] + counts[1][idx[1]] + counts[2][idx[2]]
        amplitudes = beta**total_counts.astype(np.float64)

    kernels = _kernels(_SUBSAMPLE_RESOLUTION)
    out = []
    chunk = 1 << 19
    stride = npts + _SINC_HALF + 1
    for m in range(mics.shape[0]):
        trains = np.zeros(_SUBSAMPLE_RESOLUTION * stride)
        for start in range(0, images.shape[0], chunk):
            img = images[start : start + chunk]
            amp = amplitudes[start : start + chunk]
            dist = np.sqrt(((img - mics[m]) ** 2).sum(axis=1))
            delay = dist * fs / SPEED_OF_SOUND
            in_range = delay < npts + _SINC_HALF
            if not in_range.all():
                amp, dist, delay = amp[in_range], dist[in_range], delay[in_range]
            gain = amp / (4.0 * np.pi * np.maximum(dist, 0.01))
            q = np.round(delay * _SUBSAMPLE_RESOLUTION).astype(np.int64)
            base, frac = q // _SUBSAMPLE_RESOLUTION, q % _SUBSAMPLE_RESOLUTION
            trains += np.bincount(
                frac * stride + base, weights=gain, minlength=len(trains)
            )
        trains = trains.reshape(_SUBSAMPLE_RESOLUTION, stride)
        taps = np.zeros(npts)
        for f in np.nonzero(trains.any(axis=1))[0]:
            # full convolution leads the kernel center by _SINC_HALF samples
            taps += np.convolve(trains[f], kernels[f])[_SINC_HALF : _SINC_HALF + npts]
        if beta > 0.0:
            hp_b, hp_a = butter(2, _RIR_HIGHPASS_HZ / (fs / 2.0), "highpass")
            taps = filtfilt(hp_b, hp_a, taps)
        out.append(
            ImpulseResponse(
                taps=taps,
                sample_rate=fs,
                direct_path_delay=float(direct_delay[m]),
            )
        )
    return out


def simulate_rir(
    room_dims, source_pos, mic_pos, t60: float, sample_rate: int, max_order: int | None = None
) -> ImpulseResponse:
    """Single-microphone convenience wrapper around simulate_rirs."""
    return simulate_rirs(room_dims, source_pos, [mic_pos], t60, sample_rate, max_order)[0]


def energy_decay_curve(rir: ImpulseResponse) -> np.ndarray:
    """Schroeder backward-integrated energy, normalized to start at 1."""
    energy = rir.taps**2
    total = energy.sum()
    if total <= 0:
        raise ValueError("impulse response has zero energy")
    return np.cumsum(energy[::-1])[::-1] / total


def estimate_t60(rir: ImpulseResponse) -> float:
    """T60 from a line fit to the -5 dB..-25 dB Schroeder decay, extrapolated to -60 dB."""
    edc = energy_decay_curve(rir)
    with np.errstate(divide="ignore"):
        decay_db = 10.0 * np.log10(edc)
    sel = (decay_db <= -5.0) & (decay_db >= -25.0)
    if sel.sum() < 2:
        raise ValueError("insufficient decay")
    t = np.nonzero(sel)[0] / rir.sample_rate
    slope, _ = np.polyfit(t, decay_db[sel], 1)
    if slope >= 0:
        raise ValueError("insufficient decay")
    return float(-60.0 / slope)


@dataclass
class RenderedUtterance:
    """Mixture plus the exactly-additive scaled components."""

    mixture: MultichannelWaveform
    target: MultichannelWaveform
    interferer: MultichannelWaveform
    noise: MultichannelWaveform
    scenario: RoomScenario | None = None


def mix_at_levels(
    target: MultichannelWaveform,
    interferer: MultichannelWaveform,
    noise: MultichannelWaveform,
    sir: float,
    snr: float,
    reference_channel: int = 0,
) -> RenderedUtterance:
    """Scale interferer/noise for the requested reference-channel SIR/SNR and sum."""
    shape = target.samples.shape
    if interferer.samples.shape != shape or noise.samples.shape != shape:
        raise ValueError("components must share channel count and length")
    p_target = np.sum(target.samples[reference_channel] ** 2)
    p_interferer = np.sum(interferer.samples[reference_channel] ** 2)
    p_noise = np.sum(noise.samples[reference_channel] ** 2)
    if p_target <= 0:
        raise ValueError("target reference channel has zero power")
    if p_interferer <= 0:
        raise ValueError("interferer has zero power")
    if p_noise <= 0:
        raise ValueError("noise has zero power")
    gain_i = np.sqrt(p_target / (p_interferer * 10.0 ** (sir / 10.0)))
    gain_n = np.sqrt(p_target / (p_noise * 10.0 ** (snr / 10.0)))
    scaled_i = MultichannelWaveform(interferer.samples * gain_i, target.sample_rate)
    scaled_n = MultichannelWaveform(noise.samples * gain_n, target.sample_rate)
    mixture = MultichannelWaveform(
        target.samples + scaled_i.samples + scaled_n.samples, target.sample_rate
    )
    return RenderedUtterance(mixture=mixture, target=target, interferer=scaled_i, noise=scaled_n)


def render_mixture(
    scenario: RoomScenario,
    geometry: ArrayGeometry,
    dry_target: np.ndarray,
    dry_interferer: np.ndarray,
    dry_noise: np.ndarray,
    sample_rate: int,
    max_order: int | None = None,
) -> RenderedUtterance:
    """Convolve dry sources with their per-mic RIRs, overlap-shift the interferer and mix.

    The interferer starts at (1 - overlap_ratio) * len(dry_target) so its active
    span overlaps the target span by the scenario's overlap ratio.
    """
    dry_target = np.asarray(dry_target, dtype=np.float64).reshape(-1)
    dry_interferer = np.asarray(dry_interferer, dtype=np.float64).reshape(-1)
    dry_noise = np.asarray(dry_noise, dtype=np.float64).reshape(-1)

    n_target = len(dry_target)
    offset = int(round((1.0 - scenario.overlap_ratio) * n_target))
    achieved = min(n_target - offset, len(dry_interferer)) / n_target
    if abs(achieved - scenario.overlap_ratio) > 0.05:
        raise ValueError("dry interferer too short for the requested overlap ratio")

    mics = np.asarray(scenario.array_center) + geometry.mic_positions
    rendered = {}
    rir_len = 0
    for name, pos, dry in (
        ("target", scenario.target_pos, dry_target),
        ("interferer", scenario.interferer_pos, dry_interferer),
    ):
        rirs = simulate_rirs(scenario.room_dims, pos, mics, scenario.t60, sample_rate, max_order)
        taps = np.stack([r.taps for r in rirs])
        rir_len = max(rir_len, taps.shape[1])
        rendered[name] = fftconvolve(dry[None, :], taps, axes=1)

    target_rev = rendered["target"]
    interferer_rev = rendered["interferer"]
    total = max(target_rev.shape[1], offset + interferer_rev.shape[1])

    noise_rirs = simulate_rirs(
        scenario.room_dims, scenario.noise_pos, mics, scenario.t60, sample_rate, max_order
    )
    noise_taps = np.stack([r.taps for r in noise_rirs])
    needed_noise = total - noise_taps.shape[1] + 1
    if len(dry_noise) < needed_noise:
        raise ValueError("dry noise too short for the rendered mixture")
    noise_rev = fftconvolve(dry_noise[None, :needed_noise], noise_taps, axes=1)[:, :total]

    def _pad(sig: np.ndarray, start: int) -> np.ndarray:
        out = np.zeros((sig.shape[0], total))
        out[:, start : start + sig.shape[1]] = sig
        return out

    target_wave = MultichannelWaveform(_pad(target_rev, 0), sample_rate)
    interferer_wave = MultichannelWaveform(_pad(interferer_rev, offset), sample_rate)
    noise_wave = MultichannelWaveform(_pad(noise_rev, 0), sample_rate)
    mixed = mix_at_levels(
        target_wave,
        interferer_wave,
        noise_wave,
        scenario.sir,
        scenario.snr,
        reference_channel=geometry.reference_index,
    )
    mixed.scenario = scenario
    return mixed
