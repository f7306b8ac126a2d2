"""Two-view augmentation with center-suppressed cropping.

View 1 is cropped from a centered sub-image (side ratio p of the
original) so the two views always share central content and cannot form
a false positive; view 2 is cropped from the full image.  Crop centers
are placed via Beta(alpha, alpha) draws with alpha < 1, a U-shaped
distribution that favors off-center placements and so increases the
variation between views.  Both views then pass through the usual
photometric transform set (color jitter, random grayscale, Gaussian
blur, horizontal flip).

All geometry is integer-exact and documented so tests can be bit-exact:
crop extents use floor, centered placement uses floor((h - crop_h) / 2),
and resizing is bilinear with half-pixel center alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Image

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class CropRegion:
    """Axis-aligned rectangle fully inside its source image."""

    top: int
    left: int
    crop_h: int
    crop_w: int

    def center(self) -> tuple[float, float]:
        return (self.top + (self.crop_h - 1) / 2.0, self.left + (self.crop_w - 1) / 2.0)


@dataclass
class AugmentConfig:
    p: float = 0.5  # center-crop side ratio for view 1
    alpha: float = 0.6  # Beta(alpha, alpha) shape for crop-center placement
    out_size: int = 32
    scale_range: tuple[float, float] = (0.2, 1.0)
    aspect_range: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    jitter_strength: float = 0.4
    grayscale_prob: float = 0.2
    flip_prob: float = 0.5
    blur_prob: float = 0.5
    center_crop_both: bool = False  # apply the center crop to view 2 as well

    def validate(self) -> None:
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0,1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0,1)")
        if self.out_size < 1:
            raise ValueError("out_size must be >= 1")
        lo, hi = self.scale_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("scale_range must satisfy 0 < min <= max <= 1")
        alo, ahi = self.aspect_range
        if not 0.0 < alo <= ahi:
            raise ValueError("aspect_range must satisfy 0 < min <= max")
        for name in ("jitter_strength", "grayscale_prob", "flip_prob", "blur_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")


def center_crop(img: Image, p: float) -> Image:
    """Centered crop with side ratio p; extents floor(p*h) x floor(p*w).

    The crop center coincides with the image center (up to the fixed
    floor rule); pixels are copied without interpolation.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"center_crop: p must be in (0,1], got {p}")
    ch, cw = int(np.floor(p * img.h)), int(np.floor(p * img.w))
    if ch < 1 or cw < 1:
        raise ValueError(f"center_crop: p={p} yields empty crop for {img.h}x{img.w} image")
    top, left = (img.h - ch) // 2, (img.w - cw) // 2
    return Image(img.pixels[top : top + ch, left : left + cw].copy())


def center_crop_region(h: int, w: int, p: float) -> CropRegion:
    """The region that center_crop extracts, without copying pixels."""
    ch, cw = int(np.floor(p * h)), int(np.floor(p * w))
    return CropRegion((h - ch) // 2, (w - cw) // 2, ch, cw)


def sample_beta(alpha: float, rng: np.random.Generator) -> float:
    """One draw from Beta(alpha, alpha) via Johnk's rejection algorithm.

    Needs no special functions and is valid for the alpha < 1 regime
    used here, where the density is U-shaped.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"sample_beta: alpha must be in (0,1), got {alpha}")
    while True:
        u, v = rng.random(), rng.random()
        x = u ** (1.0 / alpha)
        y = v ** (1.0 / alpha)
        if 0.0 < x + y <= 1.0:
            return x / (x + y)


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel center alignment, float64 in/out."""
    src = np.asarray(pixels, dtype=np.float64)
    h, w = src.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def center_suppressed_crop(
    img: Image, cfg: AugmentConfig, rng: np.random.Generator
) -> tuple[CropRegion, Image]:
    """Random crop with Beta-placed center, resized to out_size x out_size.

    Crop area fraction is uniform over scale_range with log-uniform
    aspect ratio in aspect_range; after 10 rejected size attempts the
    crop falls back to the largest centered square.  The crop center is
    placed at Beta(alpha, alpha) draws mapped over the feasible center
    range of each axis.
    """
    h, w = img.h, img.w
    area = float(h * w)
    ch = cw = 0
    for _ in range(10):
        target = area * rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
        log_lo, log_hi = np.log(cfg.aspect_range[0]), np.log(cfg.aspect_range[1])
        ratio = float(np.exp(rng.uniform(log_lo, log_hi)))
        tw = int(round(np.sqrt(target * ratio)))
        th = int(round(np.sqrt(target / ratio)))
        if 1 <= tw <= w and 1 <= th <= h:
            ch, cw = th, tw
            break
    if ch == 0:
        side = min(h, w)
        region = CropRegion((h - side) // 2, (w - side) // 2, side, side)
    else:
        u = sample_beta(cfg.alpha, rng)
        v = sample_beta(cfg.alpha, rng)
        top = int(round(u * (h - ch)))
        left = int(round(v * (w - cw)))
        region = CropRegion(top, left, ch, cw)

    patch = img.pixels[
        region.top : region.top + region.crop_h, region.left : region.left + region.crop_w
    ]
    resized = resize_bilinear(patch.astype(np.float64) / 255.0, cfg.out_size, cfg.out_size)
    out = Image(np.clip(np.rint(resized * 255.0), 0, 255).astype(np.uint8))
    return region, out


# ---- photometric transform set -------------------------------------------


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(span > 0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    hue = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = np.where(span > 0, (hue / 6.0) % 1.0, 0.0)
    return np.stack([hue, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hue, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (hue % 1.0) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices = np.stack(
        [
            np.stack([v, t, p], axis=-1),
            np.stack([q, v, p], axis=-1),
            np.stack([p, v, t], axis=-1),
            np.stack([p, q, v], axis=-1),
            np.stack([t, p, v], axis=-1),
            np.stack([v, p, q], axis=-1),
        ],
        axis=0,
    )
    return np.take_along_axis(choices, i[None, ..., None], axis=0)[0]


def _grayscale(x: np.ndarray) -> np.ndarray:
    g = x @ GRAY_WEIGHTS
    return np.repeat(g[..., None], 3, axis=-1)


def _gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    # Separable kernel, reflect padding; kernel radius scales with sigma.
    radius = max(1, int(np.ceil(2.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(x, ((radius, radius), (0, 0), (0, 0)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1, axis=0)
    x = np.einsum("hwck,k->hwc", windows, k)
    padded = np.pad(x, ((0, 0), (radius, radius), (0, 0)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1, axis=1)
    return np.einsum("hwck,k->hwc", windows, k)


def _color_jitter(x: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    """Brightness/contrast/saturation scales in [1-s, 1+s], hue shift in [-0.1s, 0.1s].

    Applied in that fixed order.  Draws are consumed even when s == 0 so
    the stream layout does not depend on the strength.
    """
    fb = rng.uniform(1.0 - s, 1.0 + s)
    fc = rng.uniform(1.0 - s, 1.0 + s)
    fs = rng.uniform(1.0 - s, 1.0 + s)
    fh = rng.uniform(-0.1 * s, 0.1 * s)
    x = np.clip(x * fb, 0.0, 1.0)
    m = _grayscale(x).mean()
    x = np.clip((x - m) * fc + m, 0.0, 1.0)
    g = _grayscale(x)
    x = np.clip((x - g) * fs + g, 0.0, 1.0)
    if fh != 0.0:
        hsv = _rgb_to_hsv(x)
        hsv[..., 0] = (hsv[..., 0] + fh) % 1.0
        x = np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)
    return x


def apply_transforms(img: Image, cfg: AugmentConfig, rng: np.random.Generator) -> Image:
    """Color jitter -> random grayscale -> Gaussian blur -> horizontal flip."""
    x = img.pixels.astype(np.float64) / 255.0
    x = _color_jitter(x, cfg.jitter_strength, rng)
    if rng.random() < cfg.grayscale_prob:
        x = _grayscale(x)
    if rng.random() < cfg.blur_prob:
        x = _gaussian_blur(x, rng.uniform(0.1, 2.0))
    if rng.random() < cfg.flip_prob:
        x = x[:, ::-1]
    return Image(np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8))


def augment_pair(img: Image, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[Image, Image]:
    """Two views of one image: view 1 from the centered sub-image, view 2
    from the full image (or from the sub-image too when center_crop_both
    is set).  All random draws come from `rng`, so equal (seed, image)
    gives equal views.
    """
    cfg.validate()
    src1 = center_crop(img, cfg.p)
    src2 = center_crop(img, cfg.p) if cfg.center_crop_both else img
    _, v1 = center_suppressed_crop(src1, cfg, rng)
    _, v2 = center_suppressed_crop(src2, cfg, rng)
    return apply_transforms(v1, cfg, rng), apply_transforms(v2, cfg, rng)


def to_unit_float(img: Image) -> np.ndarray:
    """Image to CHW float64 in [0, 1], the encoder's input layout."""
    return img.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0


def eval_view(img: Image, out_size: int) -> np.ndarray:
    """Deterministic evaluation input: full image resized, no randomness."""
    if img.h == out_size and img.w == out_size:
        return to_unit_float(img)
    resized = resize_bilinear(img.pixels.astype(np.float64), out_size, out_size)
    return resized.transpose(2, 0, 1) / 255.0
