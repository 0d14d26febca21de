"""Deterministic, seeded image augmentation.

One augmented output per (image, index) pair; parameters are drawn from a
generator seeded by (spec.seed, image_id, index), so the same inputs always
produce identical bytes. Operations that draw a neutral parameter are
skipped entirely, which makes the identity spec pixel-exact.
"""

from __future__ import annotations

import hashlib
import io
import random
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageEnhance, ImageOps


@dataclass(frozen=True)
class AugmentationSpec:
    """Parameter ranges for one augmentation draw (uniform within range)."""

    crop_fraction: tuple[float, float] = (0.0, 0.20)
    rotation_deg: tuple[float, float] = (-15.0, 15.0)
    grayscale_prob: float = 0.15
    hue_shift_deg: tuple[float, float] = (-24.0, 24.0)
    brightness_delta: tuple[float, float] = (-0.19, 0.19)
    seed: int = 0

    def __post_init__(self):
        for name in ("crop_fraction", "rotation_deg", "hue_shift_deg", "brightness_delta"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if not (0.0 <= self.grayscale_prob <= 1.0):
            raise ValueError(f"grayscale_prob out of range: {self.grayscale_prob}")
        lo, hi = self.crop_fraction
        if lo < 0 or hi >= 1:
            raise ValueError(f"crop_fraction must lie in [0, 1): ({lo}, {hi})")


@dataclass(frozen=True)
class AugmentParams:
    crop_fraction: float
    crop_origin: tuple[float, float]  # relative offsets in [0, 1]
    rotation_deg: float
    grayscale: bool
    hue_shift_deg: float
    brightness_factor: float


def _rng_for(spec: AugmentationSpec, image_id: str, index: int) -> random.Random:
    digest = hashlib.sha256(f"{spec.seed}:{image_id}:{index}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def draw_params(spec: AugmentationSpec, image_id: str, index: int) -> AugmentParams:
    """Draw one parameter set; every value lies inside its spec range."""
    rng = _rng_for(spec, image_id, index)
    params = AugmentParams(
        crop_fraction=rng.uniform(*spec.crop_fraction),
        crop_origin=(rng.random(), rng.random()),
        rotation_deg=rng.uniform(*spec.rotation_deg),
        grayscale=rng.random() < spec.grayscale_prob,
        hue_shift_deg=rng.uniform(*spec.hue_shift_deg),
        brightness_factor=1.0 + rng.uniform(*spec.brightness_delta),
    )
    assert spec.crop_fraction[0] <= params.crop_fraction <= spec.crop_fraction[1]
    assert spec.rotation_deg[0] <= params.rotation_deg <= spec.rotation_deg[1]
    assert spec.hue_shift_deg[0] <= params.hue_shift_deg <= spec.hue_shift_deg[1]
    assert (
        1.0 + spec.brightness_delta[0]
        <= params.brightness_factor
        <= 1.0 + spec.brightness_delta[1]
    )
    return params


def _apply(img: Image.Image, p: AugmentParams) -> Image.Image:
    img = img.convert("RGB")
    if p.crop_fraction > 0.0:
        w, h = img.size
        new_w = max(1, round(w * (1.0 - p.crop_fraction)))
        new_h = max(1, round(h * (1.0 - p.crop_fraction)))
        if new_w < 1 or new_h < 1:
            raise ValueError("degenerate crop")
        x0 = round(p.crop_origin[0] * (w - new_w))
        y0 = round(p.crop_origin[1] * (h - new_h))
        img = img.crop((x0, y0, x0 + new_w, y0 + new_h))
    if p.rotation_deg != 0.0:
        img = img.rotate(p.rotation_deg, resample=Image.BILINEAR, expand=False)
    if p.grayscale:
        img = ImageOps.grayscale(img).convert("RGB")
    if p.hue_shift_deg != 0.0:
        # PIL HSV hue is 8-bit: 256 steps over 360 degrees.
        shift = round(p.hue_shift_deg / 360.0 * 256.0)
        if shift:
            hsv = np.array(img.convert("HSV"))
            hsv[..., 0] = (hsv[..., 0].astype(np.int16) + shift) % 256
            img = Image.fromarray(hsv, mode="HSV").convert("RGB")
    if p.brightness_factor != 1.0:
        img = ImageEnhance.Brightness(img).enhance(p.brightness_factor)
    return img


def augment(
    image: Image.Image, image_id: str, spec: AugmentationSpec, index: int = 0
) -> bytes:
    """Produce one augmented PNG for (image_id, index); deterministic.

    A degenerate crop is re-sampled up to 8 times before erroring.
    """
    last_error: Exception | None = None
    for attempt in range(8):
        params = draw_params(spec, image_id, index + attempt * 1_000_003)
        if attempt:  # only the crop is re-sampled; keep the first draw otherwise
            first = draw_params(spec, image_id, index)
            params = AugmentParams(
                crop_fraction=params.crop_fraction,
                crop_origin=params.crop_origin,
                rotation_deg=first.rotation_deg,
                grayscale=first.grayscale,
                hue_shift_deg=first.hue_shift_deg,
                brightness_factor=first.brightness_factor,
            )
        try:
            out = _apply(image, params)
        except ValueError as e:
            last_error = e
            continue
        buf = io.BytesIO()
        out.save(buf, format="PNG")
        return buf.getvalue()
    raise ValueError(f"augmentation failed after 8 attempts for {image_id}: {last_error}")


def augment_dataset(
    images: list[tuple[str, Image.Image]], spec: AugmentationSpec
) -> list[tuple[str, bytes]]:
    """Doubling rule: originals plus exactly one augmented copy per image."""
    out: list[tuple[str, bytes]] = []
    for image_id, img in images:
        buf = io.BytesIO()
        img.convert("RGB").save(buf, format="PNG")
        out.append((image_id, buf.getvalue()))
        out.append((f"{image_id}_aug0", augment(img, image_id, spec, 0)))
    return out
