import logging
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from app.core.exceptions import (
    InvalidImage,
    MalformedEvName,
    MissingManifest,
    NonMonotoneEvList,
)
from app.core.imaging import luminance
from app.core.parallel import ordered_map
from app.core.png_io import read_png, write_png
from app.models.dataset import CrfKind, CrfSpec, ExposureSequence, Scene, SceneRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
GT_NAME = "gt.png"
FUSED_NAME = "fused.png"
GT_TARGET_LUMINANCE = 0.45
_EV_FILE = re.compile(r"^ev_([+-]\d+\.\d{2})\.png$")

PathLike = Union[str, Path]


def format_ev(ev: float) -> str:
    text = f"{ev:+.2f}"
    return "+0.00" if text == "-0.00" else text


def ev_filename(ev: float) -> str:
    return f"ev_{format_ev(ev)}.png"


def ev_filenames(evs: Sequence[float]) -> List[str]:
    """File names for a sequence; EVs that round to the same name are refused."""
    names = [ev_filename(ev) for ev in evs]
    if len(set(names)) != len(names):
        raise MalformedEvName(f"EVs {list(evs)} collide after rounding to two decimals: {names}")
    return names


def scene_dirname(scene_id: str) -> str:
    return f"scene_{scene_id}"


def render_radiance(seed: int, width: int, height: int) -> np.ndarray:
    """Procedural linear-radiance scene with median luminance 0.5.

    Smooth illumination gradient, 3-8 flat-albedo shapes and a value-noise
    texture; every value is finite and non-negative.
    """
    if width < 16 or height < 16:
        raise InvalidImage(f"radiance scenes need at least 16x16 pixels, got {width}x{height}")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    xx /= width - 1
    yy /= height - 1

    tilt = rng.uniform(-1.5, 1.5, size=2)
    illumination = np.exp(tilt[0] * (xx - 0.5) + tilt[1] * (yy - 0.5))

    albedo = np.empty((height, width, 3), dtype=np.float64)
    albedo[:] = rng.uniform(0.2, 0.8, size=3)
    for _ in range(int(rng.integers(3, 9))):
        color = rng.uniform(0.05, 1.0, size=3)
        if rng.random() < 0.25:
            color *= 3.0  # emitter-like highlight
        cx, cy = rng.uniform(0.0, 1.0, size=2)
        rx, ry = rng.uniform(0.08, 0.3, size=2)
        if rng.random() < 0.5:
            mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        else:
            mask = (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
        albedo[mask] = color

    coarse = rng.uniform(0.0, 1.0, size=(6, 6))
    noise = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_LINEAR)
    texture = 0.8 + 0.4 * noise

    radiance = illumination[..., None] * albedo * texture[..., None]
    return radiance * (0.5 / np.median(luminance(radiance)))


def apply_crf(radiance: np.ndarray, delta_t: float, crf: Optional[CrfSpec] = None) -> np.ndarray:
    crf = crf or CrfSpec()
    if delta_t <= 0:
        raise ValueError(f"exposure time must be positive, got {delta_t}")
    u = np.clip(np.asarray(radiance, dtype=np.float64) * delta_t, 0.0, 1.0)
    if crf.kind == CrfKind.GAMMA:
        return u ** (1.0 / crf.gamma)
    return 3.0 * u**2 - 2.0 * u**3


def render_sequence(
    radiance: np.ndarray, evs: Sequence[float], crf: Optional[CrfSpec] = None
) -> ExposureSequence:
    """One image per EV with exposure time 2**EV, ordered dark to bright."""
    evs = [float(ev) for ev in evs]
    if not evs or any(b <= a for a, b in zip(evs, evs[1:])):
        raise NonMonotoneEvList(f"EV list must be non-empty and strictly increasing: {evs}")
    return ExposureSequence(
        images=[apply_crf(radiance, 2.0**ev, crf) for ev in evs], evs=evs
    )


def render_ground_truth(
    radiance: np.ndarray,
    crf: Optional[CrfSpec] = None,
    target: float = GT_TARGET_LUMINANCE,
    iterations: int = 60,
) -> np.ndarray:
    """Auto-exposed rendition: bisect log2(delta_t) until mean luminance hits ``target``."""
    lo, hi = -12.0, 12.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if luminance(apply_crf(radiance, 2.0**mid, crf)).mean() < target:
            lo = mid
        else:
            hi = mid
    return apply_crf(radiance, 2.0 ** (0.5 * (lo + hi)), crf)


def sort_by_mean_intensity(seq: Sequence[np.ndarray]) -> List[int]:
    """Stable ascending order of the images by mean pixel value."""
    means = [float(np.mean(img)) for img in seq]
    return sorted(range(len(means)), key=lambda i: means[i])


class DatasetService:
    """Synthetic corpus generation and the scene-folder dataset contract"""

    def __init__(self, threads: int = 1):
        self.threads = threads
        self.logger = logging.getLogger(__name__)

    def synthesize(
        self,
        n_scenes: int,
        width: int,
        height: int,
        evs: Sequence[float],
        crf: Optional[CrfSpec] = None,
        seed: int = 0,
        drop_zero_ev: bool = False,
    ) -> List[Scene]:
        self.logger.info(
            f"synthesize: Entry - scenes: {n_scenes}, size: {width}x{height}, "
            f"evs: {list(evs)}, seed: {seed}"
        )
        input_evs = [ev for ev in evs if not (drop_zero_ev and ev == 0.0)]
        children = np.random.SeedSequence(seed).spawn(n_scenes)

        def build(index: int) -> Scene:
            scene_seed = int(children[index].generate_state(1)[0])
            radiance = render_radiance(scene_seed, width, height)
            return Scene(
                scene_id=f"{index:04d}",
                sequence=render_sequence(radiance, input_evs, crf),
                ground_truth=render_ground_truth(radiance, crf),
            )

        scenes = ordered_map(build, range(n_scenes), self.threads)
        self.logger.info(f"synthesize: Success - {len(scenes)} scenes")
        return scenes

    def split(
        self, scenes: Sequence[Scene], holdout_fraction: float, seed: int = 0
    ) -> Tuple[List[Scene], List[Scene]]:
        """Seeded train / held-out partition; keeps at least one training scene."""
        n = len(scenes)
        n_holdout = min(max(int(round(n * holdout_fraction)), 0), max(n - 1, 0))
        order = np.random.default_rng(seed).permutation(n)
        held = set(int(i) for i in order[:n_holdout])
        train = [s for i, s in enumerate(scenes) if i not in held]
        holdout = [s for i, s in enumerate(scenes) if i in held]
        return train, holdout

    def _write_scene(self, root: Path, scene: Scene) -> SceneRecord:
        folder = root / scene_dirname(scene.scene_id)
        folder.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, img in zip(ev_filenames(scene.evs), scene.images):
            write_png(folder / name, img, bit_depth=16)
            paths.append(f"{folder.name}/{name}")
        gt_path = None
        if scene.ground_truth is not None:
            write_png(folder / GT_NAME, scene.ground_truth, bit_depth=16)
            gt_path = f"{folder.name}/{GT_NAME}"
        return SceneRecord(
            scene_id=scene.scene_id,
            evs=[float(format_ev(ev)) for ev in scene.evs],
            paths=paths,
            gt_path=gt_path,
        )

    def save_dataset(self, root: PathLike, scenes: Sequence[Scene]) -> List[SceneRecord]:
        root = Path(root)
        self.logger.info(f"save_dataset: Entry - root: {root}, scenes: {len(scenes)}")
        try:
            for scene in scenes:
                ev_filenames(scene.evs)
            root.mkdir(parents=True, exist_ok=True)
            records = ordered_map(lambda s: self._write_scene(root, s), scenes, self.threads)
            lines = [
                f"{r.scene_id} {','.join(format_ev(ev) for ev in r.evs)}\n" for r in records
            ]
            (root / MANIFEST_NAME).write_text("".join(lines))
        except Exception as e:
            self.logger.error(f"save_dataset: Failure - {e}")
            raise
        self.logger.info(f"save_dataset: Success - {len(records)} scenes")
        return records

    def _read_manifest(self, root: Path) -> List[Tuple[str, List[float]]]:
        manifest = root / MANIFEST_NAME
        if not manifest.is_file():
            raise MissingManifest(f"no {MANIFEST_NAME} in {root}")
        entries = []
        for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MissingManifest(f"{manifest}:{lineno}: expected '<id> <ev,ev,...>'")
            scene_id, ev_text = parts
            try:
                evs = [float(tok) for tok in ev_text.split(",")]
            except ValueError as e:
                raise MalformedEvName(f"{manifest}:{lineno}: bad EV list {ev_text!r}") from e
            if any(b <= a for a, b in zip(evs, evs[1:])):
                raise NonMonotoneEvList(f"{manifest}:{lineno}: EVs not increasing: {evs}")
            entries.append((scene_id, evs))
        return entries

    def load_dataset(self, root: PathLike) -> List[SceneRecord]:
        root = Path(root)
        self.logger.info(f"load_dataset: Entry - root: {root}")
        try:
            entries = self._read_manifest(root)
            listed = {scene_dirname(scene_id) for scene_id, _ in entries}
            on_disk = {p.name for p in root.iterdir() if p.is_dir() and p.name.startswith("scene_")}
            unlisted = sorted(on_disk - listed)
            if unlisted:
                raise MissingManifest(f"scene folders missing from manifest: {unlisted}")

            records = []
            for scene_id, evs in entries:
                folder = root / scene_dirname(scene_id)
                if not folder.is_dir():
                    raise MissingManifest(f"manifest lists {scene_id} but {folder} does not exist")
                found = {}
                has_gt = False
                for path in folder.iterdir():
                    if path.name == GT_NAME:
                        has_gt = True
                        continue
                    match = _EV_FILE.match(path.name)
                    if not match:
                        raise MalformedEvName(f"unexpected file in scene folder: {path}")
                    found[float(match.group(1))] = path.name
                if sorted(found) != evs:
                    raise MalformedEvName(
                        f"{folder}: files carry EVs {sorted(found)}, manifest says {evs}"
                    )
                records.append(
                    SceneRecord(
                        scene_id=scene_id,
                        evs=evs,
                        paths=[f"{folder.name}/{found[ev]}" for ev in evs],
                        gt_path=f"{folder.name}/{GT_NAME}" if has_gt else None,
                    )
                )
        except Exception as e:
            self.logger.error(f"load_dataset: Failure - {e}")
            raise
        self.logger.info(f"load_dataset: Success - {len(records)} scenes")
        return records

    def read_scene(self, root: PathLike, record: SceneRecord) -> Scene:
        root = Path(root)
        images = [read_png(root / p).astype(np.float64) for p in record.paths]
        gt = read_png(root / record.gt_path).astype(np.float64) if record.gt_path else None
        return Scene(
            scene_id=record.scene_id,
            sequence=ExposureSequence(images=images, evs=list(record.evs)),
            ground_truth=gt,
        )

    def load_scenes(self, root: PathLike) -> List[Scene]:
        records = self.load_dataset(root)
        return ordered_map(lambda r: self.read_scene(root, r), records, self.threads)

    def read_sequence_folder(self, folder: PathLike) -> Tuple[List[str], ExposureSequence]:
        """Read every PNG of a loose folder, ordered by EV name when present, else by name."""
        folder = Path(folder)
        files = sorted(
            p
            for p in folder.iterdir()
            if p.suffix.lower() == ".png" and p.name not in (GT_NAME, FUSED_NAME)
        )
        if not files:
            raise InvalidImage(f"no PNG images in {folder}")
        evs = []
        for p in files:
            match = _EV_FILE.match(p.name)
            evs.append(float(match.group(1)) if match else None)
        if all(ev is not None for ev in evs):
            files = [f for _, f in sorted(zip(evs, files))]
            evs = sorted(evs)
        else:
            evs = None
        images = [read_png(p).astype(np.float64) for p in files]
        return [p.stem for p in files], ExposureSequence(images=images, evs=evs)
