"""Image augmentation at three nested strengths.

Strength 1 is random resized crops plus horizontal flips; strength 2 adds
color jitter and random grayscale; strength 3 adds Gaussian blur and random
erasing. Images are (C, H, W) float64 in [0, 1]. Every transform takes an
explicit ``rng`` so a pipeline application is a pure function of its seed;
individual transforms are exposed directly for forced-application testing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

CROP_SCALE = (0.08, 1.0)
CROP_RATIO = (3.0 / 4.0, 4.0 / 3.0)
ERASE_SCALE = (0.02, 0.33)
ERASE_RATIO = (0.3, 3.3)
JITTER = dict(brightness=0.4, contrast=0.4, saturation=0.4, hue=0.2)
BLUR_SIGMA = (1.0, 2.0)
LUMA = np.array([0.299, 0.587, 0.114])


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] < 1:
        raise ValueError(f"expected a (C, H, W) image, got shape {img.shape}")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise ValueError(f"image smaller than minimum crop: shape {img.shape}")
    return img


def _clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def hflip(img) -> np.ndarray:
    """Mirror the image left-to-right."""
    return _check_image(img)[:, :, ::-1].copy()


def resize_bilinear(img, out_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to (height, width), half-pixel-centre convention."""
    img = _check_image(img)
    c, h, w = img.shape
    oh, ow = out_size
    ys = np.clip((np.arange(oh) + 0.5) * h / oh - 0.5, 0, h - 1)
    xs = np.clip((np.arange(ow) + 0.5) * w / ow - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def random_resized_crop(img, rng, out_size: tuple[int, int],
                        scale=CROP_SCALE, ratio=CROP_RATIO) -> np.ndarray:
    """Crop a random area/aspect window, then resize to ``out_size``."""
    img = _check_image(img)
    _, h, w = img.shape
    area = h * w
    for _ in range(10):
        target = area * rng.uniform(*scale)
        log_r = rng.uniform(math.log(ratio[0]), math.log(ratio[1]))
        r = math.exp(log_r)
        cw = int(round(math.sqrt(target * r)))
        ch = int(round(math.sqrt(target / r)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return resize_bilinear(img[:, top:top + ch, left:left + cw], out_size)
    # fallback: centre crop at the nearest in-range aspect ratio
    in_r = w / h
    r = min(max(in_r, ratio[0]), ratio[1])
    if in_r >= r:
        ch, cw = h, max(1, int(round(h * r)))
    else:
        cw, ch = w, max(1, int(round(w / r)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    return resize_bilinear(img[:, top:top + ch, left:left + cw], out_size)


def _rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img
    mx = np.max(img, axis=0)
    mn = np.min(img, axis=0)
    d = mx - mn
    hue = np.zeros_like(mx)
    mask = d > 0
    rm = mask & (mx == r)
    gm = mask & (mx == g) & ~rm
    bm = mask & ~rm & ~gm
    hue[rm] = ((g - b)[rm] / d[rm]) % 6.0
    hue[gm] = (b - r)[gm] / d[gm] + 2.0
    hue[bm] = (r - g)[bm] / d[bm] + 4.0
    hue /= 6.0
    sat = np.where(mx > 0, d / np.maximum(mx, 1e-30), 0.0)
    return np.stack([hue, sat, mx])


def _hsv_to_rgb(img: np.ndarray) -> np.ndarray:
    h, s, v = img
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def color_jitter(img, rng, brightness=JITTER["brightness"], contrast=JITTER["contrast"],
                 saturation=JITTER["saturation"], hue=JITTER["hue"]) -> np.ndarray:
    """Multiplicative brightness/contrast/saturation jitter plus a hue shift.

    Factors are uniform in [1-v, 1+v]; the hue shift is uniform in [-h, h]
    normalized turns. No-op on non-RGB images.
    """
    img = _check_image(img)
    if img.shape[0] != 3:
        return img.copy()
    fb = rng.uniform(max(0.0, 1 - brightness), 1 + brightness)
    fc = rng.uniform(max(0.0, 1 - contrast), 1 + contrast)
    fs = rng.uniform(max(0.0, 1 - saturation), 1 + saturation)
    dh = rng.uniform(-hue, hue)
    out = _clamp(img * fb)
    mean = (LUMA @ out.reshape(3, -1)).mean()
    out = _clamp((out - mean) * fc + mean)
    gray = np.tensordot(LUMA, out, axes=1)[None]
    out = _clamp(gray + (out - gray) * fs)
    if dh != 0.0:
        hsv = _rgb_to_hsv(out)
        hsv[0] = (hsv[0] + dh) % 1.0
        out = _clamp(_hsv_to_rgb(hsv))
    return out


def grayscale(img) -> np.ndarray:
    """Luma-weighted grayscale, replicated to all channels; no-op on non-RGB."""
    img = _check_image(img)
    if img.shape[0] != 3:
        return img.copy()
    gray = np.tensordot(LUMA, img, axes=1)
    return np.repeat(gray[None], 3, axis=0)


def gaussian_blur(img, rng, sigma_range=BLUR_SIGMA) -> np.ndarray:
    """3x3 Gaussian blur; the kernel is normalized so constants pass through."""
    img = _check_image(img)
    sigma = rng.uniform(*sigma_range)
    g = np.exp(-np.arange(-1, 2) ** 2 / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    padded = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            out += kernel[dy, dx] * padded[:, dy:dy + img.shape[1], dx:dx + img.shape[2]]
    return _clamp(out)


def random_erase(img, rng, scale=ERASE_SCALE, ratio=ERASE_RATIO,
                 fill: float = 0.0) -> np.ndarray:
    """Zero out a random rectangle whose final pixel area lies in ``scale``.

    Draws are rejected (up to 10 times) when integer rounding pushes the
    rectangle outside the area bounds or the image; the fallback is the
    smallest square meeting the lower bound.
    """
    img = _check_image(img)
    c, h, w = img.shape
    area = h * w
    out = img.copy()
    for _ in range(10):
        target = area * rng.uniform(*scale)
        log_r = rng.uniform(math.log(ratio[0]), math.log(ratio[1]))
        r = math.exp(log_r)
        eh = int(round(math.sqrt(target / r)))
        ew = int(round(math.sqrt(target * r)))
        if eh < 1 or ew < 1 or eh > h or ew > w:
            continue
        if not (scale[0] * area <= eh * ew <= scale[1] * area):
            continue
        top = int(rng.integers(0, h - eh + 1))
        left = int(rng.integers(0, w - ew + 1))
        out[:, top:top + eh, left:left + ew] = fill
        return out
    side = min(h, w, int(math.ceil(math.sqrt(scale[0] * area))))
    out[:, :side, :side] = fill
    return out


@dataclass
class TransformStep:
    name: str
    prob: float
    fn: object  # callable (img, rng) -> img


@dataclass
class AugmentPipeline:
    """Ordered, probability-gated transform list for one strength level."""

    strength: int
    out_size: tuple[int, int]
    transforms: list = field(default_factory=list)


def build_pipeline(strength: int, out_size: tuple[int, int]) -> AugmentPipeline:
    """Assemble the transform list for a strength in {1, 2, 3}."""
    if strength not in (1, 2, 3):
        raise ValueError(f"strength must be 1, 2 or 3, got {strength}")
    steps = [
        TransformStep("random_resized_crop", 1.0,
                      lambda img, rng: random_resized_crop(img, rng, out_size)),
        TransformStep("hflip", 0.5, lambda img, rng: hflip(img)),
    ]
    if strength > 1:
        steps.append(TransformStep("color_jitter", 0.3,
                                   lambda img, rng: color_jitter(img, rng)))
        steps.append(TransformStep("grayscale", 0.2, lambda img, rng: grayscale(img)))
    if strength > 2:
        steps.append(TransformStep("gaussian_blur", 0.2,
                                   lambda img, rng: gaussian_blur(img, rng)))
        steps.append(TransformStep("random_erase", 0.25,
                                   lambda img, rng: random_erase(img, rng)))
    return AugmentPipeline(strength=strength, out_size=out_size, transforms=steps)


def apply(pipeline: AugmentPipeline, img, rng) -> np.ndarray:
    """Run the pipeline; output is (C, out_size) in [0, 1].

    Gate draws happen in transform order, and a skipped transform consumes
    only its gate draw, so zeroing the probabilities of the strength-2/3
    additions reproduces the strength-1 stream exactly.
    """
    out = _check_image(img)
    for step in pipeline.transforms:
        if step.prob >= 1.0 or rng.uniform() < step.prob:
            out = step.fn(out, rng)
    return _clamp(out)
