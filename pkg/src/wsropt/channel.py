"""D2D scenario generation under the ITU-1411 short-range outdoor model.

Transmitters are dropped uniformly in a square, each receiver on a disk
around its transmitter (radius uniform in [d_min, d_max]).  Channel gains
follow the line-of-sight lower-bound path loss and are normalized so that
the optimization variable is a power fraction in (0, 1] with unit noise:
all physical scale lives in the gain matrix G.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

SPEED_OF_LIGHT = 299792458.0
DATASET_FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Raised for malformed or version-incompatible dataset files."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical parameters of a random D2D drop (defaults: 20 MHz @ 2.4 GHz,
    1.5 m antennas, 20 dBm transmitters, -174 dBm/Hz noise floor, link
    distances 2..65 m in a 500 m square)."""

    num_links: int
    area_side: float = 500.0
    d_min: float = 2.0
    d_max: float = 65.0
    carrier_freq: float = 2.4e9
    bandwidth: float = 20e6
    antenna_height: float = 1.5
    tx_power_dbm: float = 20.0
    noise_psd_dbm_hz: float = -174.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_links < 1:
            raise ValueError(f"num_links must be >= 1, got {self.num_links}")
        if not (0.0 < self.d_min < self.d_max < self.area_side):
            raise ValueError(
                f"need 0 < d_min < d_max < area_side, got "
                f"{self.d_min}, {self.d_max}, {self.area_side}"
            )
        for name in ("carrier_freq", "bandwidth", "antenna_height"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class NetworkInstance:
    """One normalized optimization problem: gain matrix, weights, unit cap
    and noise.  gains[i, j] is the normalized linear gain from transmitter j
    to receiver i."""

    gains: np.ndarray
    weights: np.ndarray
    p_max: float = 1.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        K = self.gains.shape[0]
        if self.gains.shape != (K, K):
            raise ValueError(f"gains must be square, got {self.gains.shape}")
        if self.weights.shape != (K,):
            raise ValueError("weights length must match gains")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise ValueError("gains must be finite and non-negative")
        if np.any(np.diag(self.gains) <= 0):
            raise ValueError("direct gains must be strictly positive")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")

    @property
    def num_links(self) -> int:
        return self.gains.shape[0]


@dataclass
class ScenarioDataset:
    config: ScenarioConfig
    instances: list = field(default_factory=list)
    format_version: int = DATASET_FORMAT_VERSION


def sample_positions(config: ScenarioConfig, rng: np.random.Generator):
    """Drop K transmitters uniformly in the square and one receiver per
    transmitter at distance U[d_min, d_max], angle U[0, 2pi).  Receivers may
    fall outside the square; they are not re-sampled."""
    K = config.num_links
    tx = rng.uniform(0.0, config.area_side, size=(K, 2))
    dist = rng.uniform(config.d_min, config.d_max, size=K)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=K)
    rx = tx + np.stack([dist * np.cos(angle), dist * np.sin(angle)], axis=1)
    return tx, rx


def pathloss_db(distance, config: ScenarioConfig):
    """ITU-1411 line-of-sight lower bound in dB.

    L = L_bp + 6 + 20 log10(d / R_bp) below the breakpoint R_bp = 4 h^2 / lam,
    and 40 log10 beyond it, with L_bp = |20 log10(lam^2 / (8 pi h^2))|.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be strictly positive")
    lam = SPEED_OF_LIGHT / config.carrier_freq
    h = config.antenna_height
    r_bp = 4.0 * h * h / lam
    l_bp = abs(20.0 * np.log10(lam * lam / (8.0 * np.pi * h * h)))
    ratio = d / r_bp
    below = l_bp + 6.0 + 20.0 * np.log10(ratio)
    above = l_bp + 6.0 + 40.0 * np.log10(ratio)
    return np.where(d <= r_bp, below, above)


def breakpoint_distance(config: ScenarioConfig) -> float:
    lam = SPEED_OF_LIGHT / config.carrier_freq
    return 4.0 * config.antenna_height ** 2 / lam


def noise_power_dbm(config: ScenarioConfig) -> float:
    """Thermal noise over the configured bandwidth, in dBm."""
    return config.noise_psd_dbm_hz + 10.0 * np.log10(config.bandwidth)


def sample_weights(K: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Per-link rate weights: 'uniform01' draws i.i.d. U(0, 1] (zero excluded,
    weights must be strictly positive), 'ones' gives the unweighted problem."""
    if mode == "ones":
        return np.ones(K)
    if mode == "uniform01":
        # 1 - U[0,1) lies in (0, 1]
        return 1.0 - rng.uniform(0.0, 1.0, size=K)
    raise ValueError(f"unknown weight mode {mode!r}")


def build_instance(positions, config: ScenarioConfig, rng: np.random.Generator,
                   weight_mode: str = "uniform01", seed: int = 0) -> NetworkInstance:
    """Turn a position drop into a normalized NetworkInstance.

    Raw linear gains come from the path loss at every Tx_j -> Rx_i distance;
    normalization folds transmit power and noise into G so that p_max = 1 and
    noise = 1.
    """
    tx, rx = positions
    K = config.num_links
    # dist[i, j] = distance from transmitter j to receiver i
    dist = np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=2)
    if np.any(dist <= 0):
        raise ValueError("coincident transmitter/receiver positions")
    loss_db = pathloss_db(dist, config)
    g_raw = 10.0 ** (-loss_db / 10.0)
    p_tx_w = 10.0 ** ((config.tx_power_dbm - 30.0) / 10.0)
    sigma_w = 10.0 ** ((noise_power_dbm(config) - 30.0) / 10.0)
    gains = g_raw * p_tx_w / sigma_w
    weights = sample_weights(K, weight_mode, rng)
    return NetworkInstance(gains=gains, weights=weights, p_max=1.0,
                           noise=1.0, seed=seed)


def instance_rng(dataset_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for instance `index` of a dataset."""
    return np.random.default_rng([dataset_seed, index])


def generate_dataset(config: ScenarioConfig, count: int,
                     weight_mode: str = "uniform01") -> ScenarioDataset:
    """Generate `count` independent instances; instance i uses the stream
    derived from (config.rng_seed, i), so generation is order-independent."""
    instances = []
    for i in range(count):
        rng = instance_rng(config.rng_seed, i)
        pos = sample_positions(config, rng)
        instances.append(build_instance(pos, config, rng,
                                        weight_mode=weight_mode, seed=i))
    return ScenarioDataset(config=config, instances=instances)


def _fmt(x: float) -> float:
    return float(x)


def save_dataset(dataset: ScenarioDataset, path) -> None:
    """JSON-lines: header object first, then one object per instance.
    Floats are written with 17 significant digits for lossless round-trips."""
    with open(path, "w") as fh:
        header = {"format_version": dataset.format_version}
        header.update(asdict(dataset.config))
        fh.write(json.dumps(header) + "\n")
        for inst in dataset.instances:
            rec = {
                "seed": int(inst.seed),
                "K": inst.num_links,
                "G": [float(f"{x:.17g}") for x in inst.gains.ravel()],
                "w": [float(f"{x:.17g}") for x in inst.weights],
                "p_max": inst.p_max,
                "noise": inst.noise,
            }
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> ScenarioDataset:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: bad header: {exc}") from exc
    version = header.pop("format_version", None)
    if version != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(
            f"{path}: format_version {version!r}, expected {DATASET_FORMAT_VERSION}"
        )
    config = ScenarioConfig(**header)
    instances = []
    seen_seeds = set()
    for n, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            K = int(rec["K"])
            inst = NetworkInstance(
                gains=np.array(rec["G"], dtype=float).reshape(K, K),
                weights=np.array(rec["w"], dtype=float),
                p_max=float(rec["p_max"]),
                noise=float(rec["noise"]),
                seed=int(rec["seed"]),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DatasetFormatError(f"{path}:{n}: malformed record: {exc}") from exc
        if K != config.num_links:
            raise DatasetFormatError(
                f"{path}:{n}: K={K} does not match config K={config.num_links}"
            )
        if inst.seed in seen_seeds:
            raise DatasetFormatError(f"{path}:{n}: duplicate seed {inst.seed}")
        seen_seeds.add(inst.seed)
        instances.append(inst)
    return ScenarioDataset(config=config, instances=instances, format_version=version)
