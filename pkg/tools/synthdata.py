"""
Synthetic dynamic scenes: layered planar geometry seen by a translating camera.

A scene is a stack of fronto-parallel textured walls, an optional ground plane,
a backdrop and a few movers (textured rectangles that translate between frames).
Every frame is ray-cast in closed form, so the target depth is exact. World
coordinates coincide with the target camera (frame t); camera centers sit at
(f - 1) * camera_velocity for f in {0, 1, 2} = {t-1, t, t+1}.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.ndimage import gaussian_filter

from tensor_core.dft_io import read_dft, write_dft
from tools.errors import DatasetError, SceneError
from tools.geometry import HypothesisSet, Intrinsics, Pose, pixel_grid, relative_pose

logger = logging.getLogger(__name__)

FRAME_COUNT = 3
TARGET_FRAME = 1
FRAME_NAMES = ("t-1", "t", "t+1")
MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------- scene description

class Wave(BaseModel):
    """One sinusoid of a procedural texture (wave vector in cycles per meter)"""
    kx: float
    ky: float
    phase: float
    amplitude: float = Field(ge=0)
    tint: List[float] = [1.0, 1.0, 1.0]


class TextureSpec(BaseModel):
    """Base color plus sinusoids and a soft stripe pattern, in surface coordinates"""
    base: List[float]
    waves: List[Wave] = []
    stripe_period: float = Field(1.0, gt=0)
    stripe_angle: float = 0.0
    stripe_amplitude: float = Field(0.0, ge=0)

    def evaluate(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """RGB texture value at surface coordinates (s, t), clipped to [0, 1]."""
        color = np.broadcast_to(np.asarray(self.base, dtype=np.float64), s.shape + (3,)).copy()
        for wave in self.waves:
            signal = wave.amplitude * np.sin(2.0 * np.pi * (wave.kx * s + wave.ky * t) + wave.phase)
            color += signal[..., None] * np.asarray(wave.tint)
        if self.stripe_amplitude > 0:
            axis = np.cos(self.stripe_angle) * s + np.sin(self.stripe_angle) * t
            stripes = np.tanh(2.0 * np.sin(2.0 * np.pi * axis / self.stripe_period))
            color += self.stripe_amplitude * stripes[..., None]
        return np.clip(color, 0.0, 1.0)


class WallSegment(BaseModel):
    """Fronto-parallel rectangle at world depth ``depth``; bounds in world meters.

    The texture is evaluated at world (x, y) minus ``texture_origin``.
    """
    x0: float
    x1: float
    y0: float
    y1: float
    depth: float = Field(gt=0)
    texture: TextureSpec
    texture_origin: List[float] = [0.0, 0.0]

    @model_validator(mode="after")
    def _ordered(self):
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError("wall bounds must satisfy x0 < x1 and y0 < y1")
        return self


class Mover(WallSegment):
    """Wall segment that translates by ``velocity`` (meters per frame), texture included"""
    velocity: List[float] = [0.0, 0.0, 0.0]

    def at_frame(self, frame: float) -> WallSegment:
        offset = (frame - TARGET_FRAME) * np.asarray(self.velocity)
        return WallSegment(
            x0=self.x0 + offset[0],
            x1=self.x1 + offset[0],
            y0=self.y0 + offset[1],
            y1=self.y1 + offset[1],
            depth=self.depth + offset[2],
            texture=self.texture,
            texture_origin=[self.texture_origin[0] + offset[0], self.texture_origin[1] + offset[1]],
        )


class SceneSpec(BaseModel):
    """Everything needed to render one triplet deterministically"""
    seed: int
    intrinsics: Intrinsics
    d_min: float = Field(gt=0)
    d_max: float = Field(gt=0)
    camera_velocity: List[float]
    walls: List[WallSegment] = []
    movers: List[Mover] = []
    backdrop_depth: Optional[float] = None
    backdrop_texture: Optional[TextureSpec] = None
    ground_height: Optional[float] = None
    ground_texture: Optional[TextureSpec] = None
    mono_scale_jitter: float = Field(0.1, ge=0)
    mono_smooth_noise: float = Field(0.08, ge=0)
    mono_smoothing: float = Field(6.0, gt=0)

    @model_validator(mode="after")
    def _check_scene(self):
        if self.d_min >= self.d_max:
            raise ValueError("d_min must be below d_max")
        def inside(depth: float) -> bool:
            return self.d_min < depth < self.d_max

        for wall in self.walls + self.movers:
            if not inside(wall.depth):
                raise ValueError(f"object depth {wall.depth} outside ({self.d_min}, {self.d_max})")
        if self.backdrop_depth is not None:
            if not inside(self.backdrop_depth) or self.backdrop_texture is None:
                raise ValueError("backdrop needs a texture and a depth inside the hypothesis range")
        if self.ground_height is not None:
            if self.backdrop_depth is None or self.ground_texture is None:
                raise ValueError("a ground plane needs a backdrop to bound its far rows, and a texture")
            K = self.intrinsics
            nearest = self.ground_height * K.fy / (K.height - 1 - K.cy)
            if nearest <= self.d_min:
                raise ValueError(f"ground plane reaches depth {nearest:.3f} <= d_min")
        for mover in self.movers:
            shift = np.hypot(mover.velocity[0], mover.velocity[1]) * self.intrinsics.fx / mover.depth
            if shift < 1.0:
                raise ValueError(f"mover moves {shift:.2f}px per frame, need at least 1px")
        return self

    def camera_center(self, frame: int) -> np.ndarray:
        return (frame - TARGET_FRAME) * np.asarray(self.camera_velocity, dtype=np.float64)

    def pose(self, frame: int) -> Pose:
        return Pose.from_camera_center(self.camera_center(frame))


class SceneSample(BaseModel):
    """Rendered triplet with exact target depth, dynamic mask and simulated mono depth"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scene_id: str
    images: List[np.ndarray]
    poses: List[Pose]
    intrinsics: Intrinsics
    gt_depth: np.ndarray
    dynamic_mask: np.ndarray
    mono_depth: np.ndarray

    @property
    def target(self) -> np.ndarray:
        return self.images[TARGET_FRAME]

    def sources(self) -> List[Tuple[np.ndarray, Pose]]:
        """Adjacent frames with the pose mapping target-camera to source-camera coordinates."""
        target_pose = self.poses[TARGET_FRAME]
        return [
            (self.images[f], relative_pose(self.poses[f], target_pose))
            for f in range(FRAME_COUNT)
            if f != TARGET_FRAME
        ]

    def source_ids(self) -> List[str]:
        return [f"{self.scene_id}:{FRAME_NAMES[f]}" for f in range(FRAME_COUNT) if f != TARGET_FRAME]


# ---------------------------------------------------------------- ray casting

class _Layer(NamedTuple):
    depth: np.ndarray
    color: np.ndarray
    moving: bool


def _rays(K: Intrinsics) -> Tuple[np.ndarray, np.ndarray]:
    u, v = pixel_grid(K.height, K.width)
    return (u - K.cx) / K.fx, (v - K.cy) / K.fy


def _cast_wall(wall: WallSegment, center, dx, dy, moving: bool = False, bounded: bool = True) -> _Layer:
    t = wall.depth - center[2]
    x = center[0] + t * dx
    y = center[1] + t * dy
    hit = np.full(dx.shape, t > 0)
    if bounded:
        hit &= (x >= wall.x0) & (x < wall.x1) & (y >= wall.y0) & (y < wall.y1)
    depth = np.where(hit, t, np.inf)
    s0, t0 = wall.texture_origin
    return _Layer(depth, wall.texture.evaluate(x - s0, y - t0), moving)


def _cast_ground(height: float, texture: TextureSpec, center, dx, dy) -> _Layer:
    below = dy > 0
    with np.errstate(divide="ignore"):
        t = np.where(below, (height - center[1]) / np.where(below, dy, 1.0), np.inf)
    hit = below & (t > 0)
    depth = np.where(hit, t, np.inf)
    x = center[0] + np.where(hit, t, 0.0) * dx
    z = center[2] + np.where(hit, t, 0.0)
    return _Layer(depth, texture.evaluate(x, z), False)


def render_frame(spec: SceneSpec, frame: int, mover_frame: Optional[float] = None):
    """Ray-cast one camera; movers are placed at ``mover_frame`` (defaults to ``frame``).

    Returns (image, depth, moving) where ``moving`` flags pixels whose nearest
    surface is a mover.
    """
    K = spec.intrinsics
    dx, dy = _rays(K)
    center = spec.camera_center(frame)
    when = frame if mover_frame is None else mover_frame

    layers: List[_Layer] = []
    if spec.backdrop_depth is not None:
        backdrop = WallSegment(
            x0=-1.0, x1=1.0, y0=-1.0, y1=1.0, depth=spec.backdrop_depth, texture=spec.backdrop_texture
        )
        layers.append(_cast_wall(backdrop, center, dx, dy, bounded=False))
    if spec.ground_height is not None:
        layers.append(_cast_ground(spec.ground_height, spec.ground_texture, center, dx, dy))
    layers.extend(_cast_wall(w, center, dx, dy) for w in spec.walls)
    layers.extend(_cast_wall(m.at_frame(when), center, dx, dy, moving=True) for m in spec.movers)

    depth = np.full(dx.shape, np.inf)
    image = np.zeros(dx.shape + (3,))
    moving = np.zeros(dx.shape, dtype=bool)
    for layer in layers:
        nearer = layer.depth < depth
        depth = np.where(nearer, layer.depth, depth)
        image = np.where(nearer[..., None], layer.color, image)
        moving = np.where(nearer, layer.moving, moving)
    return image, depth, moving


def simulate_mono_depth(
    gt_depth: np.ndarray,
    seed: int,
    scale_jitter: float = 0.1,
    smooth_noise: float = 0.08,
    smoothing: float = 6.0,
) -> np.ndarray:
    """gt * exp(s + n): global log-scale error s plus smooth log-noise n of std ``smooth_noise``.

    The noise is parallax-blind, so moving and static regions are corrupted alike.
    """
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    if np.any(gt_depth <= 0):
        raise SceneError("simulate_mono_depth needs positive depth")
    rng = np.random.default_rng(seed)
    scale = rng.normal(0.0, scale_jitter) if scale_jitter > 0 else 0.0
    noise = np.zeros_like(gt_depth)
    if smooth_noise > 0:
        field = gaussian_filter(rng.standard_normal(gt_depth.shape), sigma=smoothing, mode="reflect")
        noise = (field - field.mean()) / max(field.std(), 1e-12) * smooth_noise
    return gt_depth * np.exp(scale + noise)


def _mono_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 0x6D6F6E6F]).generate_state(1)[0])


def render_scene(spec: SceneSpec, scene_id: Optional[str] = None) -> SceneSample:
    """Render the triplet, target depth, dynamic mask and simulated mono depth."""
    images = []
    gt_depth = None
    for frame in range(FRAME_COUNT):
        image, depth, _ = render_frame(spec, frame)
        images.append(image)
        if frame == TARGET_FRAME:
            gt_depth = depth

    if not np.all(np.isfinite(gt_depth)):
        missing = int((~np.isfinite(gt_depth)).sum())
        raise SceneError(f"scene {spec.seed}: {missing} target pixels see no surface")
    if gt_depth.min() <= spec.d_min or gt_depth.max() >= spec.d_max:
        raise SceneError(
            f"scene {spec.seed}: depth range [{gt_depth.min():.3f}, {gt_depth.max():.3f}] "
            f"leaves ({spec.d_min}, {spec.d_max})"
        )

    # mover footprint at every time step, seen from the target camera
    dynamic = np.zeros(gt_depth.shape, dtype=bool)
    if spec.movers:
        for when in range(FRAME_COUNT):
            _, _, moving = render_frame(spec, TARGET_FRAME, mover_frame=when)
            dynamic |= moving

    mono = simulate_mono_depth(
        gt_depth, _mono_seed(spec.seed), spec.mono_scale_jitter, spec.mono_smooth_noise, spec.mono_smoothing
    )
    return SceneSample(
        scene_id=scene_id or f"scene_{spec.seed}",
        images=[img.astype(np.float32) for img in images],
        poses=[spec.pose(f) for f in range(FRAME_COUNT)],
        intrinsics=spec.intrinsics,
        gt_depth=gt_depth,
        dynamic_mask=dynamic,
        mono_depth=mono,
    )


# ---------------------------------------------------------------- random scenes

class SceneSettings(BaseModel):
    """Distribution random scenes are drawn from"""
    height: int = Field(64, gt=0)
    width: int = Field(96, gt=0)
    focal: float = Field(80.0, gt=0)
    d_min: float = Field(2.0, gt=0)
    d_max: float = Field(40.0, gt=0)
    camera_speed: Tuple[float, float] = (0.4, 0.7)
    forward_speed: float = Field(0.05, ge=0)
    walls: Tuple[int, int] = (2, 4)
    wall_depth: Tuple[float, float] = (6.0, 26.0)
    mover_probability: float = Field(0.85, ge=0, le=1)
    movers: Tuple[int, int] = (1, 2)
    mover_depth: Tuple[float, float] = (4.0, 14.0)
    mover_speed_ratio: Tuple[float, float] = (0.7, 1.1)
    ground_probability: float = Field(0.7, ge=0, le=1)
    ground_height: float = Field(1.5, gt=0)
    backdrop_fraction: float = Field(0.8, gt=0, lt=1)
    texture_period_px: Tuple[float, float] = (6.0, 14.0)
    mono_scale_jitter: float = Field(0.1, ge=0)
    mono_smooth_noise: float = Field(0.08, ge=0)

    def intrinsics(self) -> Intrinsics:
        return Intrinsics(
            fx=self.focal,
            fy=self.focal,
            cx=(self.width - 1) / 2.0,
            cy=(self.height - 1) / 2.0,
            width=self.width,
            height=self.height,
        )

    def shifted(self) -> "SceneSettings":
        """Off-distribution variant: longer lens, finer textures, faster camera."""
        return self.model_copy(
            update={
                "focal": self.focal * 1.25,
                "texture_period_px": (5.0, 9.0),
                "camera_speed": (0.6, 0.9),
                "mover_speed_ratio": (0.8, 1.2),
            }
        )


def _random_texture(rng: np.random.Generator, depth: float, settings: SceneSettings, waves: int = 4) -> TextureSpec:
    low, high = settings.texture_period_px
    components = []
    for _ in range(waves):
        wavelength = rng.uniform(low, high) * depth / settings.focal
        angle = rng.uniform(0.0, np.pi)
        components.append(
            Wave(
                kx=float(np.cos(angle) / wavelength),
                ky=float(np.sin(angle) / wavelength),
                phase=float(rng.uniform(0.0, 2.0 * np.pi)),
                amplitude=float(rng.uniform(0.04, 0.08)),
                tint=rng.uniform(0.5, 1.0, size=3).tolist(),
            )
        )
    return TextureSpec(
        base=rng.uniform(0.3, 0.7, size=3).tolist(),
        waves=components,
        stripe_period=float(rng.uniform(2.0 * low, 2.0 * high) * depth / settings.focal),
        stripe_angle=float(rng.uniform(0.0, np.pi)),
        stripe_amplitude=float(rng.uniform(0.05, 0.1)),
    )


def _random_rect(rng, K: Intrinsics, depth: float, width_px, height_px, top_px=None):
    w = min(rng.uniform(*width_px), K.width - 1.0)
    h = min(rng.uniform(*height_px), K.height - 1.0)
    u0 = rng.uniform(0.0, K.width - w)
    v0 = rng.uniform(0.0, K.height - h) if top_px is None else top_px
    x0, y0 = (u0 - K.cx) * depth / K.fx, (v0 - K.cy) * depth / K.fy
    return x0, x0 + w * depth / K.fx, y0, y0 + h * depth / K.fy


def sample_scene_spec(seed: int, settings: Optional[SceneSettings] = None) -> SceneSpec:
    """Draw a random dynamic scene; deterministic in ``seed``."""
    settings = settings or SceneSettings()
    rng = np.random.default_rng(seed)
    K = settings.intrinsics()
    side = rng.choice([-1.0, 1.0])
    speed = rng.uniform(*settings.camera_speed)
    velocity = [float(side * speed), 0.0, float(rng.uniform(-1.0, 1.0) * settings.forward_speed)]

    walls = []
    for _ in range(int(rng.integers(settings.walls[0], settings.walls[1] + 1))):
        depth = float(rng.uniform(*settings.wall_depth))
        x0, x1, y0, y1 = _random_rect(rng, K, depth, (18.0, 48.0), (14.0, 40.0))
        walls.append(WallSegment(x0=x0, x1=x1, y0=y0, y1=y1, depth=depth, texture=_random_texture(rng, depth, settings)))

    movers = []
    if rng.random() < settings.mover_probability:
        for _ in range(int(rng.integers(settings.movers[0], settings.movers[1] + 1))):
            depth = float(rng.uniform(*settings.mover_depth))
            x0, x1, y0, y1 = _random_rect(rng, K, depth, (14.0, 28.0), (10.0, 20.0))
            # co-moving with the camera, so parallax nearly cancels
            ratio = rng.uniform(*settings.mover_speed_ratio)
            vx = velocity[0] * ratio
            min_speed = 1.05 * depth / K.fx
            if abs(vx) < min_speed:
                vx = np.copysign(min_speed, velocity[0])
            movers.append(
                Mover(
                    x0=x0, x1=x1, y0=y0, y1=y1, depth=depth,
                    texture=_random_texture(rng, depth, settings),
                    velocity=[float(vx), 0.0, 0.0],
                )
            )

    backdrop_depth = settings.backdrop_fraction * settings.d_max
    with_ground = rng.random() < settings.ground_probability
    return SceneSpec(
        seed=seed,
        intrinsics=K,
        d_min=settings.d_min,
        d_max=settings.d_max,
        camera_velocity=velocity,
        walls=walls,
        movers=movers,
        backdrop_depth=backdrop_depth,
        backdrop_texture=_random_texture(rng, backdrop_depth, settings),
        ground_height=settings.ground_height if with_ground else None,
        ground_texture=_random_texture(rng, 10.0, settings) if with_ground else None,
        mono_scale_jitter=settings.mono_scale_jitter,
        mono_smooth_noise=settings.mono_smooth_noise,
    )


def static_plane_spec(seed: int, hypotheses: HypothesisSet, settings: Optional[SceneSettings] = None) -> SceneSpec:
    """Noiseless static scene: one textured plane sitting exactly on a hypothesis depth."""
    settings = settings or SceneSettings()
    rng = np.random.default_rng(seed)
    index = int(rng.integers(1, hypotheses.count - 1))
    depth = hypotheses.depths[index]
    speed = rng.uniform(*settings.camera_speed)
    return SceneSpec(
        seed=seed,
        intrinsics=settings.intrinsics(),
        d_min=hypotheses.d_min,
        d_max=hypotheses.d_max,
        camera_velocity=[float(speed), 0.0, 0.0],
        backdrop_depth=depth,
        backdrop_texture=_random_texture(rng, depth, settings),
        mono_scale_jitter=0.0,
        mono_smooth_noise=0.0,
    )


# ---------------------------------------------------------------- dataset on disk

class FrameRecord(BaseModel):
    image: str
    pose_4x4_row_major: List[float]
    intrinsics: Intrinsics

    @model_validator(mode="after")
    def _sixteen(self):
        if len(self.pose_4x4_row_major) != 16:
            raise ValueError("pose must have 16 row-major entries")
        return self


class SceneRecord(BaseModel):
    id: str
    seed: int
    frames: List[FrameRecord] = Field(min_length=FRAME_COUNT, max_length=FRAME_COUNT)
    gt_depth: str
    dynamic_mask: str
    mono_depth: str
    dynamic_pixels: int = Field(0, ge=0)


class Manifest(BaseModel):
    """Index of a generated dataset; paths are relative to the manifest directory"""
    version: int = 1
    base_seed: int
    split: str = "default"
    settings: SceneSettings
    scenes: List[SceneRecord]

    def scene(self, scene_id: str) -> SceneRecord:
        for record in self.scenes:
            if record.id == scene_id:
                return record
        raise DatasetError(f"scene {scene_id!r} not in manifest")


def scene_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _write_scene(out_dir: Path, index: int, base_seed: int, settings: SceneSettings, previews: bool) -> SceneRecord:
    from tools.visualizer_tool import write_png_preview

    seed = scene_seed(base_seed, index)
    scene_id = f"scene_{index:04d}"
    sample = render_scene(sample_scene_spec(seed, settings), scene_id=scene_id)
    rel = Path("scenes") / scene_id
    folder = out_dir / rel

    frames = []
    for f, (image, pose) in enumerate(zip(sample.images, sample.poses)):
        name = f"frame_{f}.dft"
        write_dft(folder / name, image)
        frames.append(
            FrameRecord(image=str(rel / name), pose_4x4_row_major=pose.row_major(), intrinsics=sample.intrinsics)
        )
        if previews:
            write_png_preview(folder / f"frame_{f}.png", image, kind="image")
    write_dft(folder / "gt_depth.dft", sample.gt_depth)
    write_dft(folder / "dynamic_mask.dft", sample.dynamic_mask.astype(np.float32))
    write_dft(folder / "mono_depth.dft", sample.mono_depth)
    if previews:
        write_png_preview(folder / "gt_depth.png", sample.gt_depth, kind="depth", d_range=(settings.d_min, settings.d_max))
        write_png_preview(folder / "mono_depth.png", sample.mono_depth, kind="depth", d_range=(settings.d_min, settings.d_max))
        write_png_preview(folder / "dynamic_mask.png", sample.dynamic_mask, kind="mask")

    logger.debug("Rendered %s (seed %d, %d dynamic px)", scene_id, seed, int(sample.dynamic_mask.sum()))
    return SceneRecord(
        id=scene_id,
        seed=seed,
        frames=frames,
        gt_depth=str(rel / "gt_depth.dft"),
        dynamic_mask=str(rel / "dynamic_mask.dft"),
        mono_depth=str(rel / "mono_depth.dft"),
        dynamic_pixels=int(sample.dynamic_mask.sum()),
    )


def generate_dataset(
    n_scenes: int,
    base_seed: int,
    out_dir,
    settings: Optional[SceneSettings] = None,
    split: str = "default",
    workers: int = 1,
    previews: bool = True,
) -> Manifest:
    """Render ``n_scenes`` scenes into ``out_dir`` and write ``manifest.json``.

    Scene ``i`` depends only on (base_seed, i), so the tree is byte-identical for
    any worker count.
    """
    if n_scenes < 1:
        raise DatasetError(f"need at least one scene, got {n_scenes}")
    settings = settings or SceneSettings()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create {out_dir}: {exc}") from exc

    def one(index: int) -> SceneRecord:
        return _write_scene(out_dir, index, base_seed, settings, previews)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(n_scenes)))
    else:
        records = [one(i) for i in range(n_scenes)]

    manifest = Manifest(base_seed=base_seed, split=split, settings=settings, scenes=records)
    try:
        (out_dir / MANIFEST_NAME).write_text(
            json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise DatasetError(f"cannot write manifest in {out_dir}: {exc}") from exc
    dynamic = sum(1 for r in records if r.dynamic_pixels > 0)
    logger.info("Wrote %d scenes to %s (%d with movers)", n_scenes, out_dir, dynamic)
    return manifest


def load_manifest(data_dir) -> Manifest:
    path = Path(data_dir) / MANIFEST_NAME
    try:
        return Manifest.model_validate_json(path.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    except ValidationError as exc:
        raise DatasetError(f"invalid manifest {path}: {exc.error_count()} schema errors") from exc


def load_sample(data_dir, record: SceneRecord) -> SceneSample:
    """Read one scene's rasters back from disk."""
    root = Path(data_dir)
    return SceneSample(
        scene_id=record.id,
        images=[read_dft(root / frame.image) for frame in record.frames],
        poses=[Pose.from_matrix(frame.pose_4x4_row_major) for frame in record.frames],
        intrinsics=record.frames[TARGET_FRAME].intrinsics,
        gt_depth=read_dft(root / record.gt_depth).astype(np.float64),
        dynamic_mask=read_dft(root / record.dynamic_mask) > 0.5,
        mono_depth=read_dft(root / record.mono_depth).astype(np.float64),
    )
