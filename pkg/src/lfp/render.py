"""Bit-exact rasterizer for grid states, frame metric, and PPM (P6) I/O.

A frame is a ``uint8`` numpy array of shape ``(height, width, 3)``, top row
first.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .grid import GRID_H, GRID_W, GridPos

Color = tuple[int, int, int]


@dataclass(frozen=True)
class RenderConfig:
    cell_px: int = 8
    background: Color = (176, 148, 112)
    grid_color: Color = (244, 244, 244)
    object_color: Color = (24, 24, 24)
    object_radius: float = 3.0
    arm_enabled: bool = False
    arm_color: Color = (120, 84, 64)
    arm_width: int = 4

    def __post_init__(self):
        if self.cell_px < 2:
            raise ValueError("cell_px must be at least 2")
        if not 0 < self.object_radius < self.cell_px / 2:
            raise ValueError("object radius must be positive and below cell_px / 2")
        if not 0 < self.arm_width <= self.cell_px:
            raise ValueError("arm_width must be in 1..cell_px")
        for name in ("background", "grid_color", "object_color", "arm_color"):
            c = getattr(self, name)
            if len(c) != 3 or any(not (0 <= int(v) <= 255) or int(v) != v for v in c):
                raise ValueError(f"{name} is not a valid RGB8 colour: {c!r}")

    @property
    def width(self) -> int:
        return GRID_W * self.cell_px

    @property
    def height(self) -> int:
        return GRID_H * self.cell_px

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RenderConfig":
        d = dict(d)
        for k in ("background", "grid_color", "object_color", "arm_color"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def cell_center(pos: GridPos, cfg: RenderConfig) -> tuple[float, float]:
    """Pixel-space (column, row) of the centre of ``pos``; rows count from the top."""
    top = (GRID_H - 1 - pos.y) * cfg.cell_px
    return pos.x * cfg.cell_px + cfg.cell_px / 2, top + cfg.cell_px / 2


_BACKGROUND_CACHE: dict[RenderConfig, np.ndarray] = {}


def _background(cfg: RenderConfig) -> np.ndarray:
    bg = _BACKGROUND_CACHE.get(cfg)
    if bg is None:
        bg = np.empty((cfg.height, cfg.width, 3), dtype=np.uint8)
        bg[:] = cfg.background
        bg[:: cfg.cell_px, :] = cfg.grid_color
        bg[:, :: cfg.cell_px] = cfg.grid_color
        bg.flags.writeable = False
        _BACKGROUND_CACHE[cfg] = bg
    return bg


def render(pos: GridPos, cfg: RenderConfig = RenderConfig(), arm_visible: bool = False) -> np.ndarray:
    """Rasterize the object at ``pos``.

    A pixel belongs to the disc iff its centre lies within ``object_radius``
    of the cell centre. With ``arm_visible`` a vertical bar of ``arm_width``
    pixels runs from the bottom edge up to the object centre and covers
    whatever is underneath.
    """
    img = _background(cfg).copy()
    cx, cy = cell_center(pos, cfg)
    r = cfg.object_radius
    r0, r1 = int(np.floor(cy - r)), int(np.ceil(cy + r))
    c0, c1 = int(np.floor(cx - r)), int(np.ceil(cx + r))
    rows = np.arange(r0, r1)[:, None] + 0.5
    cols = np.arange(c0, c1)[None, :] + 0.5
    mask = (rows - cy) ** 2 + (cols - cx) ** 2 <= r * r
    img[r0:r1, c0:c1][mask] = cfg.object_color
    if arm_visible:
        left = int(cx) - cfg.arm_width // 2
        img[int(cy):, left : left + cfg.arm_width] = cfg.arm_color
    return img


def check_frame(f: np.ndarray) -> np.ndarray:
    if not isinstance(f, np.ndarray) or f.dtype != np.uint8 or f.ndim != 3 or f.shape[2] != 3:
        raise TypeError("a frame must be a uint8 array of shape (height, width, 3)")
    return f


def frame_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error over all sub-pixels, channels scaled to [0, 1]."""
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d)) / (255.0 * 255.0)


def downsample(f: np.ndarray, factor: int) -> np.ndarray:
    """Block-mean downsampling with round-half-up per channel."""
    h, w, _ = f.shape
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide frame size {w}x{h}")
    if factor == 1:
        return f.copy()
    n = factor * factor
    sums = f.reshape(h // factor, factor, w // factor, factor, 3).sum(axis=(1, 3), dtype=np.int64)
    # floor((2*sum + n) / (2n)) == floor(sum/n + 1/2)
    return ((2 * sums + n) // (2 * n)).astype(np.uint8)


def upsample(f: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour upscaling, the inverse layout of :func:`downsample`."""
    return np.repeat(np.repeat(f, factor, axis=0), factor, axis=1)


def to_common_resolution(frames: list[np.ndarray]) -> list[np.ndarray]:
    """Downsample every frame to the smallest resolution among them."""
    w_min = min(f.shape[1] for f in frames)
    out = []
    for f in frames:
        factor, rem = divmod(f.shape[1], w_min)
        if rem:
            raise ValueError(f"widths {f.shape[1]} and {w_min} are not integer multiples")
        out.append(f if factor == 1 else downsample(f, factor))
    return out


# --------------------------------------------------------------------- PPM

def encode_ppm(f: np.ndarray) -> bytes:
    check_frame(f)
    h, w, _ = f.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(f).tobytes()


_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")


def decode_ppm(data: bytes) -> np.ndarray:
    m = _PPM_HEADER.match(data)
    if m is None:
        raise ValueError("malformed PPM header (expected binary P6)")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}, only 255 is accepted")
    if w < 1 or h < 1:
        raise ValueError(f"invalid PPM size {w}x{h}")
    payload = data[m.end():]
    need = w * h * 3
    if len(payload) < need:
        raise ValueError(f"truncated PPM pixel data: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise ValueError(f"trailing bytes after PPM pixel data ({len(payload) - need})")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path: str | Path, f: np.ndarray) -> None:
    Path(path).write_bytes(encode_ppm(f))


def read_ppm(path: str | Path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())
