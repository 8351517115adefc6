"""Shared fixtures: structured test images and tiny synthetic datasets."""

import numpy as np
import pytest

from degrade_reid.splitting import ManifestRecord


def make_test_image(seed: int, side: int = 384, channels: int = 1) -> np.ndarray:
    """Deterministic structured image: smooth waves, hard edges, mild texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / side
    base = 0.5 + 0.22 * np.sin(2 * np.pi * (3 * xx + 5 * yy))
    base += 0.12 * np.cos(2 * np.pi * (7 * xx - 2 * yy))
    base[side // 3:side // 2, side // 4:3 * side // 4] += 0.25  # hard-edged plate
    base += rng.normal(0.0, 0.02, size=(side, side))
    img = np.clip(base, 0.0, 1.0)
    if channels == 1:
        return img[:, :, np.newaxis]
    stack = [np.clip(np.roll(img, 5 * c, axis=1), 0.0, 1.0) for c in range(channels)]
    return np.stack(stack, axis=2)


def make_manifest(n_identities: int, images_per_identity, seed: int = 0,
                  with_timestamps: bool = False) -> list:
    """Synthetic manifest; images_per_identity is an int or a per-identity list."""
    rng = np.random.default_rng(seed)
    records = []
    if isinstance(images_per_identity, int):
        counts = [images_per_identity] * n_identities
    else:
        counts = list(images_per_identity)
        assert len(counts) == n_identities
    for idx, count in enumerate(counts):
        identity = f"id{idx:04d}"
        times = np.sort(rng.uniform(0.0, 1e6, size=count)) if with_timestamps else None
        for enc in range(count):
            records.append(ManifestRecord(
                image_id=f"{identity}_img{enc:04d}",
                identity_id=identity,
                path=f"images/{identity}_img{enc:04d}.png",
                timestamp=float(times[enc]) if with_timestamps else None,
                clarity=int(rng.integers(1, 5)),
                dataset="synthetic"))
    return records


@pytest.fixture
def test_image():
    return make_test_image(0)


@pytest.fixture
def rgb_image():
    return make_test_image(1, channels=3)
