"""Train/test-time image augmentations.

Images are ``(H, W, 3)`` float arrays in ``[0, 1]``. Each kind draws its
parameters from a caller-owned :class:`~oclbench.rng.RngStream`, always
consuming the same number of draws, so a given ``(seed, label)`` reproduces
pixel-identical output:

* ``illum``: brightness U[0.5, 1.5], contrast U[0.5, 1], saturation
  U[0.5, 1.5], hue shift U[-0.1, 0.1], applied in that order.
* ``noise``: Gaussian blur, 11x11 kernel, sigma U[0.1, 0.5], mirrored borders.
* ``geom``: affine about the centre (rotation U[-30, 30] deg, translation
  U[-0.2, 0.2] of the size per axis, scale U[0.8, 1.2], shear factor
  U[-0.1, 0.1]), then perspective with p=0.2 and distortion 0.2, then
  horizontal flip p=0.5 and vertical flip p=0.3. Bilinear sampling, black fill.
* ``all``: geom, then noise, then illum.
"""

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy.ndimage import correlate1d, map_coordinates

from .errors import ContractError

AUG_KINDS = ("clean", "illum", "noise", "geom", "all")

BLUR_KERNEL = 11
PERSPECTIVE_P = 0.2
PERSPECTIVE_DISTORTION = 0.2
HFLIP_P = 0.5
VFLIP_P = 0.3

_LUMA = np.array([0.299, 0.587, 0.114])


def _clamp(img):
    return np.clip(img, 0.0, 1.0)


def grayscale(img):
    return img @ _LUMA


# photometric


def adjust_brightness(img, factor):
    return _clamp(img * factor)


def adjust_contrast(img, factor):
    mean = grayscale(img).mean()
    return _clamp(factor * img + (1.0 - factor) * mean)


def adjust_saturation(img, factor):
    gray = grayscale(img)[..., None]
    return _clamp(factor * img + (1.0 - factor) * gray)


def adjust_hue(img, shift):
    hsv = rgb_to_hsv(_clamp(img))
    hsv[..., 0] = np.mod(hsv[..., 0] + shift, 1.0)
    return _clamp(hsv_to_rgb(hsv))


def color_jitter(img, brightness, contrast, saturation, hue):
    img = adjust_brightness(img, brightness)
    img = adjust_contrast(img, contrast)
    img = adjust_saturation(img, saturation)
    return adjust_hue(img, hue)


def gaussian_blur(img, sigma, size=BLUR_KERNEL):
    x = np.arange(size) - (size - 1) / 2.0
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    out = correlate1d(img, kernel, axis=0, mode="mirror")
    out = correlate1d(out, kernel, axis=1, mode="mirror")
    return _clamp(out)


# geometric


def _sample(img, rows, cols):
    out = np.empty(rows.shape + (img.shape[2],))
    for ch in range(img.shape[2]):
        out[..., ch] = map_coordinates(img[..., ch], [rows, cols], order=1, mode="constant", cval=0.0)
    return out


def affine(img, angle=0.0, translate=(0.0, 0.0), scale=1.0, shear=0.0):
    """Affine warp about the image centre.

    ``translate`` is ``(dx, dy)`` in pixels, ``angle`` in degrees, ``shear``
    a horizontal shear factor.
    """
    H, W = img.shape[:2]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    a = np.deg2rad(angle)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    fwd = scale * rot @ np.array([[1.0, shear], [0.0, 1.0]])
    inv = np.linalg.inv(fwd)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    px = xx - cx - translate[0]
    py = yy - cy - translate[1]
    sx = inv[0, 0] * px + inv[0, 1] * py + cx
    sy = inv[1, 0] * px + inv[1, 1] * py + cy
    return _sample(img, sy, sx)


def _homography(src, dst):
    A, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        A.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        A.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.extend([u, v])
    h = np.linalg.solve(np.array(A, dtype=np.float64), np.array(rhs, dtype=np.float64))
    return np.append(h, 1.0).reshape(3, 3)


def perspective(img, offsets):
    """Warp so the image corners move inward by ``offsets`` (4 corners x (dx, dy) pixels)."""
    H, W = img.shape[:2]
    corners = np.array([[0, 0], [W - 1, 0], [W - 1, H - 1], [0, H - 1]], dtype=np.float64)
    inward = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float64)
    moved = corners + inward * np.asarray(offsets, dtype=np.float64)
    # map output pixels back to source pixels
    Hm = _homography(moved, corners)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    den = Hm[2, 0] * xx + Hm[2, 1] * yy + Hm[2, 2]
    sx = (Hm[0, 0] * xx + Hm[0, 1] * yy + Hm[0, 2]) / den
    sy = (Hm[1, 0] * xx + Hm[1, 1] * yy + Hm[1, 2]) / den
    return _sample(img, sy, sx)


def geometric(img, angle=0.0, translate=(0.0, 0.0), scale=1.0, shear=0.0, offsets=None,
              hflip=False, vflip=False):
    out = affine(img, angle, translate, scale, shear)
    if offsets is not None:
        out = perspective(out, offsets)
    if hflip:
        out = out[:, ::-1]
    if vflip:
        out = out[::-1]
    return _clamp(np.ascontiguousarray(out))


# parameter draws


def draw_illum(rng):
    return dict(
        brightness=rng.uniform(0.5, 1.5),
        contrast=rng.uniform(0.5, 1.0),
        saturation=rng.uniform(0.5, 1.5),
        hue=rng.uniform(-0.1, 0.1),
    )


def draw_blur(rng):
    return dict(sigma=rng.uniform(0.1, 0.5))


def draw_geom(rng, height, width):
    angle = rng.uniform(-30.0, 30.0)
    translate = (rng.uniform(-0.2, 0.2) * width, rng.uniform(-0.2, 0.2) * height)
    scale = rng.uniform(0.8, 1.2)
    shear = rng.uniform(-0.1, 0.1)
    use_persp = rng.bernoulli(PERSPECTIVE_P)
    half = np.array([PERSPECTIVE_DISTORTION * width / 2.0, PERSPECTIVE_DISTORTION * height / 2.0])
    offsets = rng.uniforms(8).reshape(4, 2) * half
    return dict(
        angle=angle,
        translate=translate,
        scale=scale,
        shear=shear,
        offsets=offsets if use_persp else None,
        hflip=rng.bernoulli(HFLIP_P),
        vflip=rng.bernoulli(VFLIP_P),
    )


def augment(img, kind, rng):
    """Apply augmentation ``kind`` to ``img`` with parameters drawn from ``rng``."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if kind == "clean":
        return _clamp(img.copy())
    if kind == "illum":
        return color_jitter(img, **draw_illum(rng))
    if kind == "noise":
        return gaussian_blur(img, **draw_blur(rng))
    if kind == "geom":
        return geometric(img, **draw_geom(rng, *img.shape[:2]))
    if kind == "all":
        out = geometric(img, **draw_geom(rng, *img.shape[:2]))
        out = gaussian_blur(out, **draw_blur(rng))
        return color_jitter(out, **draw_illum(rng))
    raise ContractError(f"unknown augmentation {kind!r}; expected one of {', '.join(AUG_KINDS)}")
