"""Layouts, physical/traffic constants, policies and random layout generation."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer constants. Defaults are 100 mW, alpha=3, 0 dB, -90 dBm."""

    tx_power: float = 0.1
    pathloss_exp: float = 3.0
    capture_ratio: float = 1.0
    noise_power: float = 1e-12

    def __post_init__(self):
        if not self.tx_power > 0:
            raise ValueError(f"tx_power must be > 0, got {self.tx_power}")
        if not self.pathloss_exp > 2:
            raise ValueError(f"pathloss_exp must be > 2, got {self.pathloss_exp}")
        if not self.capture_ratio > 0:
            raise ValueError(f"capture_ratio must be > 0, got {self.capture_ratio}")
        if not self.noise_power >= 0:
            raise ValueError(f"noise_power must be >= 0, got {self.noise_power}")


@dataclass(frozen=True)
class TrafficParams:
    arrival_rate: float = 0.5
    slot_duration: float = 1.0

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError(f"arrival_rate must be > 0, got {self.arrival_rate}")
        if not self.slot_duration > 0:
            raise ValueError(f"slot_duration must be > 0, got {self.slot_duration}")


@dataclass(frozen=True)
class LayoutGenSpec:
    n_links: int = 100
    side_length: float = 600.0
    d_min: float = 2.0
    d_max: float = 80.0
    seed: int = 0

    def __post_init__(self):
        if self.n_links < 1:
            raise ValueError("n_links must be >= 1")
        # d_min == d_max is allowed: a degenerate annulus puts every receiver on a circle
        if not 0 < self.d_min <= self.d_max < self.side_length:
            raise ValueError(
                f"need 0 < d_min <= d_max < side_length, got "
                f"{self.d_min}, {self.d_max}, {self.side_length}"
            )


@dataclass(frozen=True, eq=False)
class Layout:
    """Positions of N transmitter/receiver pairs in an L x L square (meters)."""

    tx_pos: np.ndarray
    rx_pos: np.ndarray
    side_length: float
    gen_spec: LayoutGenSpec | None = field(default=None)

    def __post_init__(self):
        tx = np.array(self.tx_pos, dtype=np.float64).reshape(-1, 2)
        rx = np.array(self.rx_pos, dtype=np.float64).reshape(-1, 2)
        if tx.shape != rx.shape or len(tx) == 0:
            raise ValueError("tx_pos and rx_pos must have the same non-zero length")
        L = float(self.side_length)
        for name, pts in (("tx_pos", tx), ("rx_pos", rx)):
            if np.any(pts < 0) or np.any(pts > L):
                raise ValueError(f"{name} has coordinates outside [0, {L}]")
        tx.setflags(write=False)
        rx.setflags(write=False)
        object.__setattr__(self, "tx_pos", tx)
        object.__setattr__(self, "rx_pos", rx)
        object.__setattr__(self, "side_length", L)

    @property
    def n_links(self) -> int:
        return len(self.tx_pos)

    def direct_distances(self) -> np.ndarray:
        return np.hypot(*(self.rx_pos - self.tx_pos).T)

    def permuted(self, perm) -> Layout:
        perm = np.asarray(perm)
        return Layout(self.tx_pos[perm], self.rx_pos[perm], self.side_length, self.gen_spec)

    def __eq__(self, other):
        if not isinstance(other, Layout):
            return NotImplemented
        return (
            self.side_length == other.side_length
            and np.array_equal(self.tx_pos, other.tx_pos)
            and np.array_equal(self.rx_pos, other.rx_pos)
        )


class LayoutGenerationError(RuntimeError):
    pass


def generate_layout(
    spec: LayoutGenSpec, max_rx_attempts: int = 64, max_tx_retries: int = 1000
) -> Layout:
    """Draw transmitters uniformly in the square and each receiver uniformly
    (by area) over the annulus [d_min, d_max] around its transmitter.

    Receivers landing outside the square are redrawn; a transmitter whose
    annulus keeps missing the square is itself redrawn.
    """
    rng = np.random.default_rng(spec.seed)
    L = float(spec.side_length)
    r2_lo, r2_hi = spec.d_min**2, spec.d_max**2
    tx = np.empty((spec.n_links, 2))
    rx = np.empty((spec.n_links, 2))
    budget = max_tx_retries * spec.n_links
    for i in range(spec.n_links):
        while True:
            t = rng.uniform(0.0, L, size=2)
            for _ in range(max_rx_attempts):
                r = np.sqrt(rng.uniform(r2_lo, r2_hi))
                theta = rng.uniform(0.0, 2 * np.pi)
                cand = t + r * np.array([np.cos(theta), np.sin(theta)])
                if np.all(cand >= 0) and np.all(cand <= L):
                    break
            else:
                budget -= 1
                if budget <= 0:
                    raise LayoutGenerationError(
                        f"could not place receivers for spec {spec} within retry budget"
                    )
                continue
            tx[i], rx[i] = t, cand
            break
    return Layout(tx, rx, L, spec)


def distance_matrix(layout: Layout) -> np.ndarray:
    """d[j, i] = distance from transmitter j to receiver i."""
    diff = layout.tx_pos[:, None, :] - layout.rx_pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(d <= 0):
        j, i = np.argwhere(d <= 0)[0]
        raise ValueError(f"zero distance between tx {j} and rx {i}")
    return d


def check_policy(p, n_links: int | None = None) -> np.ndarray:
    """Validate a slot-access policy vector and return it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("policy must be a 1-D vector")
    if n_links is not None and len(p) != n_links:
        raise ValueError(f"policy has {len(p)} entries, layout has {n_links} links")
    if not np.all((p > 0) & (p <= 1)):
        raise ValueError("policy entries must lie in (0, 1]")
    return p


def seeds_from(master_seed: int, count: int) -> list[int]:
    """Independent 63-bit child seeds derived from one master seed."""
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1, np.uint64)[0] >> np.uint64(1)) for s in ss.spawn(count)]


# -- layout files ------------------------------------------------------------

LAYOUT_HEADER = ["link", "tx_x", "tx_y", "rx_x", "rx_y"]


def save_layout(layout: Layout, path) -> None:
    """CSV of coordinates plus a key=value sibling (`<path>.meta`)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LAYOUT_HEADER)
        for k, (t, r) in enumerate(zip(layout.tx_pos, layout.rx_pos)):
            w.writerow([k, repr(float(t[0])), repr(float(t[1])), repr(float(r[0])), repr(float(r[1]))])
    meta = {"side_length": repr(layout.side_length), "n_links": str(layout.n_links)}
    if layout.gen_spec is not None:
        meta.update({f"gen.{k}": repr(v) for k, v in asdict(layout.gen_spec).items()})
    with open(_meta_path(path), "w") as f:
        for k, v in meta.items():
            f.write(f"{k}={v}\n")


def load_layout(path) -> Layout:
    path = Path(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != LAYOUT_HEADER:
        raise ValueError(f"{path}: expected header {','.join(LAYOUT_HEADER)}")
    data = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    meta = {}
    with open(_meta_path(path)) as f:
        for line in f:
            line = line.strip()
            if line:
                k, _, v = line.partition("=")
                meta[k] = v
    gen = None
    if "gen.seed" in meta:
        gen = LayoutGenSpec(
            n_links=int(meta["gen.n_links"]),
            side_length=float(meta["gen.side_length"]),
            d_min=float(meta["gen.d_min"]),
            d_max=float(meta["gen.d_max"]),
            seed=int(meta["gen.seed"]),
        )
    return Layout(data[:, 0:2], data[:, 2:4], float(meta["side_length"]), gen)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta")
