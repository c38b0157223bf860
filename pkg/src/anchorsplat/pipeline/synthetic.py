"""
Procedural test scenes.

Scenes are made of textured planes and spheres and ray-traced at integer pixel coordinates, so every image comes with
an exact z-depth map. Colors are view-independent (no shading), which degree-0 Gaussians can represent exactly.
Cameras sit on a uniform orbit: input views evenly spaced along it, novel views interleaved between them.
"""
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch

from anchorsplat.errors import UnknownPresetError
from anchorsplat.file_utils import write_json
from anchorsplat.geometry.cameras import Extrinsics, Intrinsics, look_at
from anchorsplat.imaging import write_pfm, write_png
from anchorsplat.paths import FileExtension, Paths, SystemDirectory

logger = logging.getLogger(__name__)

_EXTENT_TOL = 1e-9
_PARALLEL_EPS = 1e-12

Color = Tuple[float, float, float]


class Checker:
    """Two-color checkerboard in surface coordinates."""

    def __init__(self, *, size: float, colors: Tuple[Color, Color]):
        self.size = size
        self.colors = torch.tensor(colors, dtype=torch.float64)

    def __call__(self, uv: torch.Tensor) -> torch.Tensor:
        parity = torch.floor(uv / self.size).to(torch.long).sum(dim=1) % 2
        return self.colors[parity]


class Gradient:
    """Smooth periodic blend between two colors along the first surface coordinate."""

    def __init__(self, *, period: float, colors: Tuple[Color, Color]):
        self.period = period
        self.colors = torch.tensor(colors, dtype=torch.float64)

    def __call__(self, uv: torch.Tensor) -> torch.Tensor:
        s = 0.5 + 0.5 * torch.sin(2 * math.pi * uv[:, 0] / self.period)
        return self.colors[0] * (1 - s)[:, None] + self.colors[1] * s[:, None]


Texture = Callable[[torch.Tensor], torch.Tensor]


class Hit(NamedTuple):
    t: torch.Tensor
    """Ray parameter of the hit, inf where the ray misses"""

    uv: torch.Tensor


class Plane:
    """Rectangle centered at origin and spanned by unit axes; infinite half sizes give an unbounded plane."""

    def __init__(
        self,
        *,
        origin: Sequence[float],
        axis_u: Sequence[float],
        axis_v: Sequence[float],
        texture: Texture,
        half_u: float = math.inf,
        half_v: float = math.inf,
    ):
        self.origin = torch.tensor(origin, dtype=torch.float64)
        self.axis_u = torch.tensor(axis_u, dtype=torch.float64)
        self.axis_v = torch.tensor(axis_v, dtype=torch.float64)
        self.normal = torch.linalg.cross(self.axis_u, self.axis_v)
        self.half_u = half_u
        self.half_v = half_v
        self.texture = texture

    def intersect(self, origin: torch.Tensor, directions: torch.Tensor) -> Hit:
        denom = directions @ self.normal
        safe = torch.where(denom.abs() > _PARALLEL_EPS, denom, torch.ones_like(denom))
        t = ((self.origin - origin) @ self.normal) / safe
        local = origin + t[:, None] * directions - self.origin
        su = local @ self.axis_u
        sv = local @ self.axis_v
        valid = (
            (denom.abs() > _PARALLEL_EPS)
            & (t > 0)
            & (su.abs() <= self.half_u + _EXTENT_TOL)
            & (sv.abs() <= self.half_v + _EXTENT_TOL)
        )
        return Hit(t=torch.where(valid, t, torch.full_like(t, math.inf)), uv=torch.stack([su, sv], dim=1))


class Sphere:
    def __init__(self, *, center: Sequence[float], radius: float, texture: Texture):
        self.center = torch.tensor(center, dtype=torch.float64)
        self.radius = radius
        self.texture = texture

    def intersect(self, origin: torch.Tensor, directions: torch.Tensor) -> Hit:
        oc = origin - self.center
        a = (directions * directions).sum(dim=1)
        b = 2.0 * (directions @ oc)
        c = float(oc @ oc) - self.radius ** 2
        disc = b * b - 4 * a * c
        t = (-b - torch.sqrt(disc.clamp(min=0.0))) / (2 * a)
        valid = (disc >= 0) & (t > 0)

        n = (origin + t[:, None] * directions - self.center) / self.radius
        # longitude/latitude scaled to arc length
        lon = torch.atan2(n[:, 0], n[:, 2]) * self.radius
        lat = torch.acos(n[:, 1].clamp(-1.0, 1.0)) * self.radius
        return Hit(t=torch.where(valid, t, torch.full_like(t, math.inf)), uv=torch.stack([lon, lat], dim=1))


Primitive = Any


def pixel_rays(K: Intrinsics, E: Extrinsics) -> torch.Tensor:
    """World ray directions through integer pixels, scaled so the parameter along the ray is camera z."""
    v, u = torch.meshgrid(
        torch.arange(K.height, dtype=torch.float64), torch.arange(K.width, dtype=torch.float64), indexing='ij'
    )
    camera = torch.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, torch.ones_like(u)], dim=-1).reshape(-1, 3)
    return camera @ E.R.T


def trace(
    primitives: Sequence[Primitive], K: Intrinsics, E: Extrinsics, background: Color = (0.0, 0.0, 0.0)
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Ray-trace one view.

    Returns the H×W×3 image and the H×W z-depth map; pixels whose ray hits nothing get the background color and
    depth 0 (invalid).
    """
    directions = pixel_rays(K, E)
    origin = E.T
    count = directions.shape[0]
    depth = torch.full((count,), math.inf, dtype=torch.float64)
    image = torch.tensor(background, dtype=torch.float64).expand(count, 3).clone()

    for primitive in primitives:
        hit = primitive.intersect(origin, directions)
        closer = hit.t < depth
        if not bool(closer.any()):
            continue
        depth = torch.where(closer, hit.t, depth)
        image = torch.where(closer[:, None], primitive.texture(hit.uv), image)

    depth = torch.where(torch.isfinite(depth), depth, torch.zeros_like(depth))
    return image.reshape(K.height, K.width, 3), depth.reshape(K.height, K.width)


class Orbit:
    """Cameras on a circle (or an arc of it) around target, looking at it or, inside enclosures, away from it."""

    def __init__(
        self,
        *,
        target: Sequence[float],
        radius: float,
        height: float,
        arc: Optional[float] = None,
        bob: float = 0.0,
        outward: bool = False,
    ):
        self.target = list(target)
        self.radius = radius
        self.height = height
        self.arc = arc
        self.bob = bob
        self.outward = outward

    def _angles(self, views: int, novel: int, phase: float) -> Tuple[List[float], List[float]]:
        if self.arc is None:
            inputs = [phase + 2 * math.pi * i / views for i in range(views)]
            novels = [phase + 2 * math.pi * j / max(novel, 1) + math.pi / views for j in range(novel)]
            return inputs, novels

        half = self.arc / 2
        inputs = [-half + self.arc * i / (views - 1) if views > 1 else 0.0 for i in range(views)]
        novels = [-half + self.arc * (j + 0.5) / novel for j in range(novel)]
        return inputs, novels

    def _pose(self, angle: float) -> Extrinsics:
        offset = [
            self.radius * math.sin(angle),
            self.height + self.bob * math.sin(2 * angle),
            -self.radius * math.cos(angle),
        ]
        if self.outward:
            # camera near the middle of an enclosure, facing away from the target
            eye = [self.target[0] + 0.35 * offset[0], offset[1], self.target[2] + 0.35 * offset[2]]
            look = [self.target[0] + offset[0], self.target[1], self.target[2] + offset[2]]
            return look_at(eye, look)
        eye = [self.target[0] + offset[0], self.target[1] + offset[1], self.target[2] + offset[2]]
        return look_at(eye, self.target)

    def poses(self, views: int, novel: int, phase: float = 0.0) -> Tuple[List[Extrinsics], List[Extrinsics]]:
        inputs, novels = self._angles(views, novel, phase)
        return [self._pose(a) for a in inputs], [self._pose(a) for a in novels]


class SceneLayout(NamedTuple):
    primitives: List[Primitive]
    orbit: Orbit
    background: Color
    phase: float


def _palette(generator: torch.Generator, count: int) -> List[Color]:
    colors = 0.1 + 0.8 * torch.rand((count, 3), generator=generator, dtype=torch.float64)
    return [tuple(float(c) for c in row) for row in colors]  # type: ignore


def _uniform(generator: torch.Generator, lo: float, hi: float) -> float:
    return lo + (hi - lo) * float(torch.rand(1, generator=generator, dtype=torch.float64))


def box_room(generator: torch.Generator) -> SceneLayout:
    """Closed room with checker and gradient walls; the camera orbits inside, looking at the walls."""
    hx, hy, hz = 2.0, 1.2, 2.0
    colors = _palette(generator, 12)
    size = _uniform(generator, 0.35, 0.55)

    def checker(i: int) -> Checker:
        return Checker(size=size, colors=(colors[2 * i], colors[2 * i + 1]))

    def gradient(i: int) -> Gradient:
        return Gradient(period=1.5, colors=(colors[2 * i], colors[2 * i + 1]))

    walls = [
        Plane(origin=(0, 0, hz), axis_u=(1, 0, 0), axis_v=(0, 1, 0), half_u=hx, half_v=hy, texture=checker(0)),
        Plane(origin=(0, 0, -hz), axis_u=(1, 0, 0), axis_v=(0, 1, 0), half_u=hx, half_v=hy, texture=gradient(1)),
        Plane(origin=(hx, 0, 0), axis_u=(0, 0, 1), axis_v=(0, 1, 0), half_u=hz, half_v=hy, texture=gradient(2)),
        Plane(origin=(-hx, 0, 0), axis_u=(0, 0, 1), axis_v=(0, 1, 0), half_u=hz, half_v=hy, texture=checker(3)),
        Plane(origin=(0, hy, 0), axis_u=(1, 0, 0), axis_v=(0, 0, 1), half_u=hx, half_v=hz, texture=checker(4)),
        Plane(origin=(0, -hy, 0), axis_u=(1, 0, 0), axis_v=(0, 0, 1), half_u=hx, half_v=hz, texture=gradient(5)),
    ]
    orbit = Orbit(target=(0.0, 0.0, 0.0), radius=1.0, height=-0.1, bob=0.1, outward=True)
    return SceneLayout(primitives=walls, orbit=orbit, background=(0.0, 0.0, 0.0), phase=_uniform(generator, 0, 1))


def textured_planes(generator: torch.Generator) -> SceneLayout:
    """Floating checker panels in front of a gradient back wall, seen from an arc."""
    colors = _palette(generator, 10)
    primitives: List[Primitive] = [
        Plane(
            origin=(0, 0, 3.5),
            axis_u=(1, 0, 0),
            axis_v=(0, 1, 0),
            half_u=8.0,
            half_v=8.0,
            texture=Gradient(period=2.0, colors=(colors[0], colors[1])),
        ),
        Plane(
            origin=(0, 1.0, 0),
            axis_u=(1, 0, 0),
            axis_v=(0, 0, 1),
            half_u=8.0,
            half_v=8.0,
            texture=Checker(size=0.5, colors=(colors[2], colors[3])),
        ),
    ]
    for i in range(3):
        x = _uniform(generator, -1.2, 1.2)
        y = _uniform(generator, -0.4, 0.3)
        z = 0.9 + 0.6 * i
        primitives.append(
            Plane(
                origin=(x, y, z),
                axis_u=(1, 0, 0),
                axis_v=(0, 1, 0),
                half_u=_uniform(generator, 0.3, 0.6),
                half_v=_uniform(generator, 0.3, 0.5),
                texture=Checker(size=0.15, colors=(colors[4 + i], colors[(7 + i) % 10])),
            )
        )
    orbit = Orbit(target=(0.0, 0.0, 1.5), radius=3.0, height=-0.3, arc=1.0)
    return SceneLayout(primitives=primitives, orbit=orbit, background=(0.0, 0.0, 0.0), phase=0.0)


def sphere_field(generator: torch.Generator) -> SceneLayout:
    """Spheres resting on a checker floor in front of a gradient wall."""
    colors = _palette(generator, 14)
    primitives: List[Primitive] = [
        Plane(
            origin=(0, 1.0, 0),
            axis_u=(1, 0, 0),
            axis_v=(0, 0, 1),
            half_u=8.0,
            half_v=8.0,
            texture=Checker(size=0.4, colors=(colors[0], colors[1])),
        ),
        Plane(
            origin=(0, 0, 4.0),
            axis_u=(1, 0, 0),
            axis_v=(0, 1, 0),
            half_u=8.0,
            half_v=8.0,
            texture=Gradient(period=2.5, colors=(colors[2], colors[3])),
        ),
    ]
    for i in range(5):
        radius = _uniform(generator, 0.25, 0.45)
        center = (_uniform(generator, -1.5, 1.5), 1.0 - radius, 0.6 + 0.45 * i)
        primitives.append(
            Sphere(
                center=center,
                radius=radius,
                texture=Checker(size=0.2, colors=(colors[4 + 2 * i], colors[5 + 2 * i])),
            )
        )
    orbit = Orbit(target=(0.0, 0.4, 1.6), radius=3.2, height=-0.6, arc=1.0)
    return SceneLayout(primitives=primitives, orbit=orbit, background=(0.0, 0.0, 0.0), phase=0.0)


PRESETS: Dict[str, Callable[[torch.Generator], SceneLayout]] = {
    'box-room': box_room,
    'textured-planes': textured_planes,
    'sphere-field': sphere_field,
}


def default_intrinsics(width: int, height: int) -> Intrinsics:
    focal = 0.8 * width
    return Intrinsics(fx=focal, fy=focal, cx=width / 2, cy=height / 2, width=width, height=height)


def _view_entry(name: str, split: str, K: Intrinsics, E: Extrinsics) -> Dict[str, Any]:
    return {
        'name': name,
        'split': split,
        'image': f'{SystemDirectory.IMAGES.value}/{name}{FileExtension.PNG.value}',
        'depth': f'{SystemDirectory.DEPTHS.value}/{name}{FileExtension.PFM.value}',
        'intrinsics': K.dict(),
        'extrinsics': {
            'convention': 'camera-to-world',
            'R': [float(x) for x in E.R.reshape(-1)],
            'T': [float(x) for x in E.T],
        },
    }


def gen_scene(
    preset: str,
    out_dir: Path,
    seed: int = 0,
    views: int = 8,
    novel: int = 2,
    width: int = 128,
    height: int = 96,
) -> Dict[str, Any]:
    """Render a preset into out_dir (images/, depth/, scene.json) and return the manifest."""
    if preset not in PRESETS:
        raise UnknownPresetError(preset, sorted(PRESETS))

    generator = torch.Generator().manual_seed(seed)
    layout = PRESETS[preset](generator)
    K = default_intrinsics(width, height)
    input_poses, novel_poses = layout.orbit.poses(views, novel, layout.phase)

    named = [(f'input_{i:03d}', 'input', E) for i, E in enumerate(input_poses)]
    named += [(f'novel_{j:03d}', 'novel', E) for j, E in enumerate(novel_poses)]

    entries = []
    for name, split, E in named:
        image, depth = trace(layout.primitives, K, E, layout.background)
        write_png(Paths.images_dir(out_dir) / f'{name}{FileExtension.PNG.value}', image)
        write_pfm(Paths.depths_dir(out_dir) / f'{name}{FileExtension.PFM.value}', depth)
        entries.append(_view_entry(name, split, K, E))
        logger.debug(f'Traced {name} ({split})')

    manifest = {
        'api_version': 'v1',
        'name': f'{preset}-{seed}',
        'units': 'm',
        'depth_provenance': 'ground-truth',
        'generator': {'preset': preset, 'seed': seed, 'views': views, 'novel': novel},
        'views': entries,
    }
    write_json(Paths.manifest_file(out_dir), manifest)
    return manifest
