"""Procedural chest-phantom corpus: layered soft-edged ellipses (body, two
lung fields, a bright cardiac core) with value-noise texture, plus additive
lesion fields for four disease classes.

Every diseased sample is constructed as healthy_twin + lesion_field on the
same jittered anatomy, with the field thresholded just above two 16-bit
quantization steps, so the support of (diseased - healthy) equals the stored
lesion mask exactly, before and after PNG round-trips. The enlarged_core
class is held out of training by policy; generate_dataset refuses to emit it
unless explicitly overridden.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import imgio
from .numerics import SeededRng

# one quantization step of 16-bit PNG is 1/65535; keep fields safely above two
FIELD_THRESHOLD = 2.5 / 65535.0

MANIFEST_VERSION = 1


class GeometryError(ValueError):
    """Lesion parameters that cannot be placed inside the target anatomy."""


class HeldOutClassError(ValueError):
    """Attempt to put the held-out class into a training corpus."""


@dataclass(frozen=True)
class EllipseSpec:
    cx: float
    cy: float
    ax: float
    ay: float
    intensity: float


@dataclass(frozen=True)
class JitterSpec:
    center_px: float = 2.0
    local_px: float = 0.75
    axes_frac: float = 0.05
    core_scale: tuple = (0.85, 1.15)


@dataclass(frozen=True)
class TextureSpec:
    amplitude: float = 0.012
    grid_px: int = 8


@dataclass(frozen=True)
class LesionRanges:
    opacity_radius: tuple = (3.2, 5.2)
    opacity_delta: tuple = (0.22, 0.32)
    haze_severity: tuple = (0.10, 0.18)
    focal_count: tuple = (3, 6)
    focal_radius: tuple = (1.9, 3.1)
    focal_delta: tuple = (0.20, 0.30)
    core_enlarge: tuple = (1.20, 1.40)


@dataclass(frozen=True)
class PhantomSpec:
    image_size: int = 64
    body: EllipseSpec = EllipseSpec(32.0, 33.0, 25.0, 28.0, 0.55)
    lung_left: EllipseSpec = EllipseSpec(20.0, 30.0, 7.5, 12.5, 0.22)
    lung_right: EllipseSpec = EllipseSpec(44.0, 30.0, 7.5, 12.5, 0.22)
    core: EllipseSpec = EllipseSpec(33.0, 38.0, 6.5, 8.5, 0.74)
    texture: TextureSpec = TextureSpec()
    jitter: JitterSpec = JitterSpec()
    lesions: LesionRanges = LesionRanges()
    edge_px: float = 2.0

    @property
    def lungs(self):
        return (self.lung_left, self.lung_right)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "PhantomSpec":
        return PhantomSpec(
            image_size=d["image_size"],
            body=EllipseSpec(**d["body"]),
            lung_left=EllipseSpec(**d["lung_left"]),
            lung_right=EllipseSpec(**d["lung_right"]),
            core=EllipseSpec(**d["core"]),
            texture=TextureSpec(**d["texture"]),
            jitter=JitterSpec(
                center_px=d["jitter"]["center_px"],
                local_px=d["jitter"]["local_px"],
                axes_frac=d["jitter"]["axes_frac"],
                core_scale=tuple(d["jitter"]["core_scale"]),
            ),
            lesions=LesionRanges(**{k: tuple(v) for k, v in d["lesions"].items()}),
            edge_px=d["edge_px"],
        )


@dataclass(frozen=True)
class Opacity:
    side: str  # "left" | "right", image side
    radius: float
    delta: float


@dataclass(frozen=True)
class DiffuseHaze:
    severity: float


@dataclass(frozen=True)
class FocalCluster:
    count: int
    radius: float
    delta: float


@dataclass(frozen=True)
class EnlargedCore:
    scale: float  # >= 1, multiplies the core axes


LesionKind = Union[Opacity, DiffuseHaze, FocalCluster, EnlargedCore]

CLASS_NORMAL = "normal"
CLASS_OPACITY = "lung_opacity"
CLASS_HAZE = "diffuse_haze"
CLASS_PNEUMONIA = "focal_pneumonia"
CLASS_ENLARGED = "enlarged_core"

TRAIN_CLASSES = (CLASS_NORMAL, CLASS_OPACITY, CLASS_HAZE, CLASS_PNEUMONIA)
HELD_OUT_CLASSES = (CLASS_ENLARGED,)
ALL_CLASSES = TRAIN_CLASSES + HELD_OUT_CLASSES

# prompts used by evaluation and the service when none is supplied
CANONICAL_PROMPTS = {
    CLASS_NORMAL: "normal chest scan",
    CLASS_OPACITY: "lung opacity",
    CLASS_HAZE: "diffuse haze",
    CLASS_PNEUMONIA: "viral pneumonia chest scan",
    CLASS_ENLARGED: "cardiomegaly",
}

DESK_MIX = {CLASS_NORMAL: 400, CLASS_OPACITY: 150, CLASS_HAZE: 150, CLASS_PNEUMONIA: 150}


@dataclass
class Sample:
    image: np.ndarray  # float64 [S,S] in [0,1]
    lesion_mask: np.ndarray  # uint8 {0,1}
    lung_mask: np.ndarray  # uint8 {0,1}
    label_text: str
    seed: int
    class_name: str
    kind: Optional[LesionKind] = None


def _smoothstep01(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _grid(size: int):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return xs, ys


def ellipse_coverage(size: int, e: EllipseSpec, edge_px: float) -> np.ndarray:
    """Soft ellipse coverage in [0,1] with ~edge_px transition, finite support.

    Signed pixel distance to the boundary is approximated from the implicit
    q = ((x-cx)/ax)^2 + ((y-cy)/ay)^2 via first-order d = (1-q)/|grad q|.
    """
    xs, ys = _grid(size)
    dx = (xs - e.cx) / e.ax
    dy = (ys - e.cy) / e.ay
    q = dx * dx + dy * dy
    gx = 2.0 * dx / e.ax
    gy = 2.0 * dy / e.ay
    gnorm = np.sqrt(gx * gx + gy * gy)
    gnorm = np.maximum(gnorm, 1e-6)
    d = (1.0 - q) / gnorm
    return _smoothstep01(d / edge_px + 0.5)


def value_noise(size: int, grid_px: int, rng: SeededRng) -> np.ndarray:
    """Smooth value noise: bilinear interpolation of a coarse N(0,1) lattice."""
    nodes = size // grid_px + 2
    lattice = rng.normal((nodes, nodes))
    xs, ys = _grid(size)
    gx = xs / grid_px
    gy = ys / grid_px
    x0 = gx.astype(int)
    y0 = gy.astype(int)
    fx = gx - x0
    fy = gy - y0
    n = (
        lattice[y0, x0] * (1 - fx) * (1 - fy)
        + lattice[y0, x0 + 1] * fx * (1 - fy)
        + lattice[y0 + 1, x0] * (1 - fx) * fy
        + lattice[y0 + 1, x0 + 1] * fx * fy
    )
    return n


@dataclass(frozen=True)
class _Anatomy:
    body: EllipseSpec
    lung_left: EllipseSpec
    lung_right: EllipseSpec
    core: EllipseSpec  # jittered position/axes, pre core_scale
    core_scale: float


def _jitter_ellipse(e: EllipseSpec, shift, rng: SeededRng, j: JitterSpec) -> EllipseSpec:
    lx, ly = rng.uniform(-j.local_px, j.local_px, (2,))
    fa, fb = rng.uniform(-j.axes_frac, j.axes_frac, (2,))
    return EllipseSpec(e.cx + shift[0] + lx, e.cy + shift[1] + ly,
                       e.ax * (1 + fa), e.ay * (1 + fb), e.intensity)


def _draw_anatomy(spec: PhantomSpec, rng: SeededRng) -> _Anatomy:
    j = spec.jitter
    shift = rng.uniform(-j.center_px, j.center_px, (2,))
    body = _jitter_ellipse(spec.body, shift, rng, j)
    ll = _jitter_ellipse(spec.lung_left, shift, rng, j)
    lr = _jitter_ellipse(spec.lung_right, shift, rng, j)
    core = _jitter_ellipse(spec.core, shift, rng, j)
    core_scale = float(rng.uniform(*j.core_scale))
    return _Anatomy(body, ll, lr, core, core_scale)


def _scaled_core(anat: _Anatomy, extra: float = 1.0) -> EllipseSpec:
    c = anat.core
    s = anat.core_scale * extra
    return EllipseSpec(c.cx, c.cy, c.ax * s, c.ay * s, c.intensity)


def _render(spec: PhantomSpec, anat: _Anatomy, texture: np.ndarray, core_extra: float = 1.0) -> np.ndarray:
    """Layered composite: body, lungs, core (drawn last, brightest), texture."""
    size = spec.image_size
    img = np.zeros((size, size))
    cov_body = ellipse_coverage(size, anat.body, spec.edge_px)
    img = img * (1 - cov_body) + anat.body.intensity * cov_body
    for lung in (anat.lung_left, anat.lung_right):
        cov = ellipse_coverage(size, lung, spec.edge_px)
        img = img * (1 - cov) + lung.intensity * cov
    cov_core = ellipse_coverage(size, _scaled_core(anat, core_extra), spec.edge_px)
    img = img * (1 - cov_core) + anat.core.intensity * cov_core
    img = img + spec.texture.amplitude * texture * cov_body
    return np.clip(img, 0.0, 1.0)


def _lung_masks(spec: PhantomSpec, anat: _Anatomy):
    size = spec.image_size
    covl = ellipse_coverage(size, anat.lung_left, spec.edge_px)
    covr = ellipse_coverage(size, anat.lung_right, spec.edge_px)
    lung = (covl >= 0.5) | (covr >= 0.5)
    return lung.astype(np.uint8), covl, covr


def _blob_field(size: int, cx: float, cy: float, radius: float, delta: float, edge_px: float) -> np.ndarray:
    xs, ys = _grid(size)
    r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    return delta * _smoothstep01((radius - r) / edge_px + 0.5)


_CIRCLE_ANGLES = np.linspace(0.0, 2 * np.pi, 32, endpoint=False)


def _disk_inside_ellipse(cx: float, cy: float, r: float, e: EllipseSpec) -> bool:
    # max of the ellipse implicit over the disk boundary; 32 samples suffice
    # because the function is smooth and we carry a quarter-pixel safety pad
    px = cx + r * np.cos(_CIRCLE_ANGLES)
    py = cy + r * np.sin(_CIRCLE_ANGLES)
    q = ((px - e.cx) / e.ax) ** 2 + ((py - e.cy) / e.ay) ** 2
    return bool(np.max(q) <= 1.0)


def _place_in_lung(lung: EllipseSpec, radius: float, edge_px: float, rng: SeededRng):
    """Center for a blob of the given radius wholly inside the lung ellipse.

    Scalar-margin erosion of an ellipse is not exact (the eroded set is not an
    ellipse), so candidates are rejection-sampled against an explicit
    disk-in-ellipse test. Deterministic given the stream.
    """
    reach = radius + edge_px / 2 + 0.25
    eff_ax = lung.ax - reach
    eff_ay = lung.ay - reach
    if eff_ax <= 0 or eff_ay <= 0:
        raise GeometryError(
            f"lesion radius {radius:.2f}px does not fit inside lung axes "
            f"({lung.ax:.2f}, {lung.ay:.2f})"
        )
    for _ in range(64):
        u = float(rng.uniform(0.0, 1.0))
        phi = float(rng.uniform(0.0, 2 * np.pi))
        rho = np.sqrt(u)
        cx = lung.cx + rho * np.cos(phi) * eff_ax
        cy = lung.cy + rho * np.sin(phi) * eff_ay
        if _disk_inside_ellipse(cx, cy, reach, lung):
            return cx, cy
    raise GeometryError(
        f"could not place radius {radius:.2f}px lesion inside lung after 64 tries"
    )


def _lesion_field(spec: PhantomSpec, anat: _Anatomy, texture: np.ndarray,
                  kind: LesionKind, rng: SeededRng) -> np.ndarray:
    size = spec.image_size
    if isinstance(kind, Opacity):
        if kind.side not in ("left", "right"):
            raise GeometryError(f"unknown side {kind.side!r}")
        lung = anat.lung_left if kind.side == "left" else anat.lung_right
        cx, cy = _place_in_lung(lung, kind.radius, spec.edge_px, rng)
        field = _blob_field(size, cx, cy, kind.radius, kind.delta, spec.edge_px)
    elif isinstance(kind, DiffuseHaze):
        covl = ellipse_coverage(size, anat.lung_left, spec.edge_px)
        covr = ellipse_coverage(size, anat.lung_right, spec.edge_px)
        modulation = 0.75 + 0.25 * np.tanh(value_noise(size, spec.texture.grid_px, rng))
        field = kind.severity * np.maximum(covl, covr) * modulation
    elif isinstance(kind, FocalCluster):
        field = np.zeros((size, size))
        for _ in range(kind.count):
            lung = anat.lung_left if int(rng.integers(0, 2)) == 0 else anat.lung_right
            r = kind.radius * float(rng.uniform(0.75, 1.25))
            cx, cy = _place_in_lung(lung, r, spec.edge_px, rng)
            blob = _blob_field(size, cx, cy, r, kind.delta, spec.edge_px)
            field = np.maximum(field, blob)
    elif isinstance(kind, EnlargedCore):
        if kind.scale < 1.0:
            raise GeometryError("EnlargedCore scale must be >= 1")
        base = _render(spec, anat, texture, core_extra=1.0)
        grown = _render(spec, anat, texture, core_extra=kind.scale)
        field = grown - base  # positive: the core outshines everything it covers
    else:
        raise GeometryError(f"unknown lesion kind {type(kind).__name__}")
    field = field.copy()
    field[field < FIELD_THRESHOLD] = 0.0
    return field


def draw_kind(class_name: str, spec: PhantomSpec, rng: SeededRng) -> Optional[LesionKind]:
    """Sample concrete lesion parameters for a class from the spec ranges."""
    r = spec.lesions
    if class_name == CLASS_NORMAL:
        return None
    if class_name == CLASS_OPACITY:
        side = "left" if int(rng.integers(0, 2)) == 0 else "right"
        return Opacity(side, float(rng.uniform(*r.opacity_radius)), float(rng.uniform(*r.opacity_delta)))
    if class_name == CLASS_HAZE:
        return DiffuseHaze(float(rng.uniform(*r.haze_severity)))
    if class_name == CLASS_PNEUMONIA:
        count = int(rng.integers(r.focal_count[0], r.focal_count[1] + 1))
        return FocalCluster(count, float(rng.uniform(*r.focal_radius)), float(rng.uniform(*r.focal_delta)))
    if class_name == CLASS_ENLARGED:
        return EnlargedCore(float(rng.uniform(*r.core_enlarge)))
    raise ValueError(f"unknown class {class_name!r}")


def class_of_kind(kind: Optional[LesionKind]) -> str:
    if kind is None:
        return CLASS_NORMAL
    return {
        Opacity: CLASS_OPACITY,
        DiffuseHaze: CLASS_HAZE,
        FocalCluster: CLASS_PNEUMONIA,
        EnlargedCore: CLASS_ENLARGED,
    }[type(kind)]


def _label_text(kind: Optional[LesionKind], anat: _Anatomy, rng: SeededRng) -> str:
    pick = lambda opts: opts[int(rng.integers(0, len(opts)))]
    if kind is None:
        base = pick(["normal chest scan", "healthy chest x-ray", "normal chest x-ray"])
        # heart size is reported densely (terciles) and strong deviations
        # sometimes get a heart-only line; with mean-pooled conditioning the
        # short labels are what keeps core geometry text-steerable
        if anat.core_scale <= 0.89 and int(rng.integers(0, 2)):
            return pick(["small heart", "small heart chest scan"])
        if anat.core_scale >= 1.11 and int(rng.integers(0, 2)):
            return pick(["large heart", "enlarged heart chest scan"])
        if anat.core_scale <= 0.95:
            return base + " with small heart"
        if anat.core_scale >= 1.05:
            return base + " with large heart"
        return base
    if isinstance(kind, Opacity):
        size = "large " if kind.radius >= 4.7 else ("small " if kind.radius <= 3.7 else "")
        return pick([
            f"{size}lung opacity on the {kind.side}",
            f"{size}opacity in the {kind.side} lung",
            f"{kind.side} lung {size}opacity",
            f"{kind.side} opacity",
            f"{size}opacity {kind.side}",
        ]).strip()
    if isinstance(kind, DiffuseHaze):
        w = "severe " if kind.severity >= 0.145 else ("mild " if kind.severity <= 0.115 else "")
        return pick([
            f"{w}diffuse haze in both lungs",
            f"{w}diffuse haze chest scan",
        ]).strip()
    if isinstance(kind, FocalCluster):
        return pick([
            "viral pneumonia chest scan",
            "viral pneumonia with focal clusters",
            "focal viral pneumonia in both lungs",
        ])
    if isinstance(kind, EnlargedCore):
        return pick(["cardiomegaly", "cardiomegaly with enlarged heart"])
    raise ValueError(f"unknown kind {kind!r}")


def generate_sample(spec: PhantomSpec, kind, rng: SeededRng) -> Sample:
    """Render one phantom. kind: None/"healthy" for a healthy scan, else a LesionKind.

    rng must be a fresh stream; its seed becomes the sample identity. The
    healthy twin of any diseased sample is generate_sample(spec, None,
    SeededRng(same_seed)) and shares anatomy bit-for-bit.
    """
    if kind == "healthy":
        kind = None
    anat_rng, lesion_rng, text_rng = rng.split(1), rng.split(2), rng.split(3)
    anat = _draw_anatomy(spec, anat_rng)
    texture = value_noise(spec.image_size, spec.texture.grid_px, anat_rng)
    healthy = _render(spec, anat, texture)
    lung_mask, _, _ = _lung_masks(spec, anat)
    if kind is None:
        image = healthy
        lesion_mask = np.zeros_like(lung_mask)
    else:
        field = _lesion_field(spec, anat, texture, kind, lesion_rng)
        image = healthy + field
        if image.max() > 1.0:
            raise GeometryError(f"lesion field overflows data range (max {image.max():.3f})")
        lesion_mask = (field > 0).astype(np.uint8)
    label = _label_text(kind, anat, text_rng)
    return Sample(image=image, lesion_mask=lesion_mask, lung_mask=lung_mask,
                  label_text=label, seed=rng.seed, class_name=class_of_kind(kind), kind=kind)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0x7FFFFFFFFFFFFFFF


def sample_seed_for(dataset_seed: int, class_name: str, index: int) -> int:
    """Stable per-sample seed derived from the dataset seed, class and index."""
    h = _splitmix64(dataset_seed)
    for ch in class_name:
        h = _splitmix64(h ^ ord(ch))
    return _splitmix64(h ^ index)


def side_mask(spec: PhantomSpec, side: str) -> np.ndarray:
    """Boolean half-plane mask splitting the image at the body midline,
    used to score whether induced changes land on the named side."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be left or right, got {side!r}")
    size = spec.image_size
    xs = np.arange(size)[None, :] + 0.0
    half = (xs < spec.body.cx) if side == "left" else (xs >= spec.body.cx)
    return np.broadcast_to(half, (size, size)).copy()


def nominal_lung_mask(spec: PhantomSpec, side: str, grow_px: float = 3.0) -> np.ndarray:
    """Boolean mask of the unjittered lung ellipse on one side, grown by
    grow_px so per-sample jitter stays covered."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be left or right, got {side!r}")
    lung = spec.lung_left if side == "left" else spec.lung_right
    grown = EllipseSpec(lung.cx, lung.cy, lung.ax + grow_px, lung.ay + grow_px,
                        lung.intensity)
    return ellipse_coverage(spec.image_size, grown, spec.edge_px) >= 0.5


def central_region_mask(spec: PhantomSpec, factor: float = 1.9) -> np.ndarray:
    """Boolean mask of the central cardiac region (nominal core, enlarged by
    factor), used to score whether induced changes concentrate centrally."""
    c = spec.core
    grown = EllipseSpec(c.cx, c.cy, c.ax * factor, c.ay * factor, c.intensity)
    return ellipse_coverage(spec.image_size, grown, spec.edge_px) >= 0.5


@dataclass
class ManifestEntry:
    path: str
    label_text: str
    class_name: str
    seed: int


@dataclass
class Manifest:
    version: int
    spec: PhantomSpec
    entries: list
    class_counts: dict
    root: str = ""

    def by_class(self, class_name: str):
        return [e for e in self.entries if e.class_name == class_name]


def generate_dataset(spec: PhantomSpec, class_mix: dict, out_dir: str, seed: int,
                     heldout_ok: bool = False) -> Manifest:
    """Render a corpus to <out_dir>/<class>/<seed>.png (+ <seed>.mask.png) and
    write manifest.json. Refuses held-out classes unless heldout_ok."""
    for cname in class_mix:
        if cname not in ALL_CLASSES:
            raise ValueError(f"unknown class {cname!r}")
        if cname in HELD_OUT_CLASSES and not heldout_ok:
            raise HeldOutClassError(
                f"{cname} is held out of training corpora; pass heldout_ok=True "
                "only for evaluation sets"
            )
    entries = []
    for cname, count in class_mix.items():
        for i in range(count):
            s = sample_seed_for(seed, cname, i)
            rng = SeededRng(s)
            kind = draw_kind(cname, spec, rng.split(0))
            sample = generate_sample(spec, kind, rng)
            rel = os.path.join(cname, f"{s}.png")
            imgio.write_gray16(os.path.join(out_dir, rel), sample.image)
            imgio.write_mask(os.path.join(out_dir, cname, f"{s}.mask.png"), sample.lesion_mask)
            # region-of-interest mask (the full lung field), the analog of the
            # per-image segmentation that attribution maps are masked with
            imgio.write_mask(os.path.join(out_dir, cname, f"{s}.roi.png"), sample.lung_mask)
            entries.append(ManifestEntry(path=rel, label_text=sample.label_text,
                                         class_name=cname, seed=s))
    manifest = Manifest(version=MANIFEST_VERSION, spec=spec, entries=entries,
                        class_counts=dict(class_mix), root=out_dir)
    payload = {
        "version": manifest.version,
        "spec": spec.to_dict(),
        "entries": [
            {"path": e.path, "label_text": e.label_text, "class": e.class_name, "seed": e.seed}
            for e in entries
        ],
        "class_counts": manifest.class_counts,
    }
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(payload, f, indent=1)
    return manifest


def load_manifest(path: str) -> Manifest:
    """Load and validate a manifest.json written by generate_dataset.

    Accepts either the manifest file itself or the dataset directory."""
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as f:
        payload = json.load(f)
    root = os.path.dirname(os.path.abspath(path))
    if payload.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {payload.get('version')}")
    spec = PhantomSpec.from_dict(payload["spec"])
    entries = [
        ManifestEntry(path=e["path"], label_text=e["label_text"],
                      class_name=e["class"], seed=e["seed"])
        for e in payload["entries"]
    ]
    counts: dict = {}
    for e in entries:
        if e.class_name not in ALL_CLASSES:
            raise ValueError(f"manifest lists unknown class {e.class_name!r}")
        counts[e.class_name] = counts.get(e.class_name, 0) + 1
    if counts != payload["class_counts"]:
        raise ValueError("manifest class_counts do not match entries")
    missing = [e.path for e in entries if not os.path.exists(os.path.join(root, e.path))]
    if missing:
        raise FileNotFoundError(f"{len(missing)} manifest files missing, first: {missing[0]}")
    return Manifest(version=payload["version"], spec=spec, entries=entries,
                    class_counts=counts, root=root)


def load_entry_image(manifest: Manifest, entry: ManifestEntry) -> np.ndarray:
    return imgio.read_gray(os.path.join(manifest.root, entry.path))


def load_entry_mask(manifest: Manifest, entry: ManifestEntry) -> np.ndarray:
    mask_path = entry.path.replace(".png", ".mask.png")
    return imgio.read_mask(os.path.join(manifest.root, mask_path))


def load_entry_roi(manifest: Manifest, entry: ManifestEntry) -> np.ndarray:
    """Per-scan region-of-interest mask (the full lung field).

    Falls back to rendering the sample again for datasets written before ROI
    masks were stored; the generator is deterministic per seed so the result
    is identical."""
    roi_path = os.path.join(manifest.root, entry.path.replace(".png", ".roi.png"))
    if os.path.isfile(roi_path):
        return imgio.read_mask(roi_path)
    rng = SeededRng(entry.seed)
    kind = draw_kind(entry.class_name, manifest.spec, rng.split(0))
    return generate_sample(manifest.spec, kind, rng).lung_mask
