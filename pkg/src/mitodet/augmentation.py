"""Colorimetric and flip augmentations with a fixed, replayable draw order.

Images are float arrays of shape ``(H, W, 3)`` holding RGB intensities in
``[0, 1]``. Color ops are applied in the order brightness, hue, contrast,
saturation and are followed by the flip stage.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Box, flip_box


@dataclass(frozen=True)
class ColorJitter:
    prob: float
    low: float
    high: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"activation probability {self.prob} outside [0, 1]")
        if self.low > self.high:
            raise ValueError(f"range [{self.low}, {self.high}] is not ordered")


@dataclass(frozen=True)
class AugmentationPolicy:
    brightness: ColorJitter = ColorJitter(0.2, -0.2, 0.2)
    hue: ColorJitter = ColorJitter(0.2, -0.1, 0.1)
    contrast: ColorJitter = ColorJitter(0.2, -0.2, 0.2)
    saturation: ColorJitter = ColorJitter(0.2, -0.2, 0.2)
    flip_prob: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob {self.flip_prob} outside [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> AugmentationPolicy:
        data = dict(data)
        kwargs = {}
        for name in COLOR_OPS:
            if name in data:
                kwargs[name] = ColorJitter(**data.pop(name))
        if "flip_prob" in data:
            kwargs["flip_prob"] = float(data.pop("flip_prob"))
        if data:
            raise ValueError(f"unknown augmentation keys: {sorted(data)}")
        return cls(**kwargs)


COLOR_OPS = ("brightness", "hue", "contrast", "saturation")


def to_float(img: np.ndarray) -> np.ndarray:
    """8-bit RGB to normalized float64."""
    return np.asarray(img, dtype=np.float64) / 255.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Normalized float to 8-bit, rounding halves away from zero."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB to HSV; hue in ``[0, 1)``, achromatic pixels get hue 0."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    chroma = c > 0
    safe_c = np.where(chroma, c, 1.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)

    h = np.zeros_like(v)
    rmax = chroma & (v == r)
    gmax = chroma & (v == g) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    h = np.where(rmax, ((g - b) / safe_c) % 6.0, h)
    h = np.where(gmax, (b - r) / safe_c + 2.0, h)
    h = np.where(bmax, (r - g) / safe_c + 4.0, h)
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    h6 = h * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    conds = [sector == k for k in range(6)]
    rgb = np.stack(
        [np.select(conds, choices_r), np.select(conds, choices_g), np.select(conds, choices_b)],
        axis=-1,
    )
    return np.clip(rgb, 0.0, 1.0)


def adjust_brightness(img: np.ndarray, delta: float) -> np.ndarray:
    if delta == 0:
        return np.array(img, dtype=np.float64, copy=True)
    return np.clip(img + delta, 0.0, 1.0)


def adjust_hue(img: np.ndarray, delta: float) -> np.ndarray:
    """Rotate the hue of every pixel by ``delta`` turns, wrapping modulo 1."""
    if delta == 0:
        return np.array(img, dtype=np.float64, copy=True)
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + delta) % 1.0
    return hsv_to_rgb(hsv)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale distances from mid-gray by ``1 + factor``."""
    if factor == 0:
        return np.array(img, dtype=np.float64, copy=True)
    return np.clip((img - 0.5) * (1.0 + factor) + 0.5, 0.0, 1.0)


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    if factor == 0:
        return np.array(img, dtype=np.float64, copy=True)
    hsv = rgb_to_hsv(img)
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 + factor), 0.0, 1.0)
    return hsv_to_rgb(hsv)


_COLOR_FNS = {
    "brightness": adjust_brightness,
    "hue": adjust_hue,
    "contrast": adjust_contrast,
    "saturation": adjust_saturation,
}


def flip_image(img: np.ndarray, flip_h: bool, flip_v: bool) -> np.ndarray:
    out = img
    if flip_h:
        out = out[:, ::-1]
    if flip_v:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def random_flip(
    img: np.ndarray, boxes: list[Box], rng: np.random.Generator, prob: float = 0.5
) -> tuple[np.ndarray, list[Box]]:
    """Independently flip horizontally and vertically, each with probability ``prob``."""
    out, out_boxes, _ = _random_flip(img, boxes, rng, prob)
    return out, out_boxes


def _random_flip(img, boxes, rng, prob):
    flip_h = bool(rng.random() < prob)
    flip_v = bool(rng.random() < prob)
    h, w = img.shape[:2]
    out = flip_image(img, flip_h, flip_v)
    out_boxes = [flip_box(b, w, h, flip_h, flip_v) for b in boxes]
    return out, out_boxes, (flip_h, flip_v)


@dataclass
class AugmentTrace:
    """Activation draws and parameters of one ``augment`` call."""

    draws: dict[str, dict] = field(default_factory=dict)
    flip_h: bool = False
    flip_v: bool = False

    def active(self, op: str) -> bool:
        return self.draws[op]["active"]

    @property
    def unchanged(self) -> bool:
        return not (self.flip_h or self.flip_v or any(d["active"] for d in self.draws.values()))

    def as_dict(self) -> dict:
        out = {op: dict(d) for op, d in self.draws.items()}
        out["flip"] = {"h": self.flip_h, "v": self.flip_v}
        return out


def augment_with_trace(
    img: np.ndarray,
    boxes: list[Box],
    policy: AugmentationPolicy,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[Box], AugmentTrace]:
    trace = AugmentTrace()
    out = np.asarray(img, dtype=np.float64)
    for op in COLOR_OPS:
        jitter: ColorJitter = getattr(policy, op)
        u = float(rng.random())
        record = {"u": u, "active": u < jitter.prob}
        if record["active"]:
            param = float(rng.uniform(jitter.low, jitter.high))
            record["param"] = param
            out = _COLOR_FNS[op](out, param)
        trace.draws[op] = record
    out, boxes, (trace.flip_h, trace.flip_v) = _random_flip(out, list(boxes), rng, policy.flip_prob)
    return out, boxes, trace


def augment(
    img: np.ndarray,
    boxes: list[Box],
    policy: AugmentationPolicy,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[Box]]:
    """Apply the stochastic augmentation chain described by ``policy``.

    Each color op consumes one activation draw, plus one parameter draw when
    it fires; the flip stage always consumes two draws. Boxes only move when
    a flip fires.
    """
    out, out_boxes, _ = augment_with_trace(img, boxes, policy, rng)
    return out, out_boxes
