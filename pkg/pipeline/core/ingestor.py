import os
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Tuple

from ..config.settings import IMAGE_EXTENSIONS, IMAGES_PER_SEQUENCE, SEQUENCE_KINDS
from .errors import (
    DataError,
    DecodeFailure,
    EmptyDataset,
    IlluminationNotIdentity,
    MissingHomography,
    MissingImage,
    UnclassifiablePrefix,
)
from .geometry import Homography, load_homography
from .imaging import DEFAULT_MAX_PIXELS, GrayImage, decode_netpbm

SPLIT_CHOICES = ("all", "illumination", "viewpoint")


@dataclass(frozen=True, eq=False)
class Sequence:
    """One reference image (index 1) plus five targets and the H_1j maps to them."""

    id: str
    kind: str
    images: Tuple[GrayImage, ...]
    homographies: Tuple[Homography, ...]
    digest: str = ""

    def image(self, j: int) -> GrayImage:
        return self.images[j - 1]

    def homography(self, j: int) -> Homography:
        """H_1j for j = 2..6."""
        return self.homographies[j - 2]


@dataclass(frozen=True, eq=False)
class Dataset:
    root: str
    sequences: Tuple[Sequence, ...]

    @property
    def counts(self) -> Dict[str, int]:
        counts = {kind: 0 for kind in SEQUENCE_KINDS.values()}
        for seq in self.sequences:
            counts[seq.kind] += 1
        return counts

    @property
    def digest(self) -> str:
        """sha256 over the ordered per-sequence digests."""
        h = hashlib.sha256()
        for seq in self.sequences:
            h.update(f"{seq.id}:{seq.digest}\n".encode("utf-8"))
        return h.hexdigest()

    def by_id(self, sequence_id: str) -> Sequence:
        for seq in self.sequences:
            if seq.id == sequence_id:
                return seq
        raise KeyError(sequence_id)

    def of_kind(self, kind: str) -> List[Sequence]:
        return [seq for seq in self.sequences if seq.kind == kind]


def classify(sequence_id: str) -> str:
    for prefix, kind in SEQUENCE_KINDS.items():
        if sequence_id.startswith(prefix):
            return kind
    raise UnclassifiablePrefix(
        f"Sequence {sequence_id!r} starts with neither {' nor '.join(SEQUENCE_KINDS)}"
    )


def _image_path(seq_dir: str, j: int) -> str:
    for ext in IMAGE_EXTENSIONS:
        path = os.path.join(seq_dir, f"{j}.{ext}")
        if os.path.isfile(path):
            return path
    raise MissingImage(f"{os.path.basename(seq_dir)}: image {j} not found (tried {', '.join(f'{j}.{e}' for e in IMAGE_EXTENSIONS)})")


def load_sequence(seq_dir: str, max_pixels: int = DEFAULT_MAX_PIXELS) -> Sequence:
    sequence_id = os.path.basename(os.path.normpath(seq_dir))
    kind = classify(sequence_id)
    digest = hashlib.sha256()

    images = []
    for j in range(1, IMAGES_PER_SEQUENCE + 1):
        path = _image_path(seq_dir, j)
        with open(path, "rb") as f:
            payload = f.read()
        digest.update(payload)
        try:
            images.append(decode_netpbm(payload, max_pixels=max_pixels))
        except DataError as e:
            raise DecodeFailure(f"{sequence_id}/{os.path.basename(path)}: {e}") from e

    homographies = []
    for j in range(2, IMAGES_PER_SEQUENCE + 1):
        path = os.path.join(seq_dir, f"H_1_{j}")
        if not os.path.isfile(path):
            raise MissingHomography(f"{sequence_id}: H_1_{j} not found")
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        digest.update(text.encode("utf-8"))
        try:
            homographies.append(load_homography(text))
        except DataError as e:
            raise type(e)(f"{sequence_id}/H_1_{j}: {e}") from e

    if kind == "illumination":
        for j, H in enumerate(homographies, start=2):
            if not H.is_identity(tol=1e-9):
                raise IlluminationNotIdentity(f"{sequence_id}: H_1_{j} is not the identity")

    return Sequence(sequence_id, kind, tuple(images), tuple(homographies), digest.hexdigest())


def load_dataset(root: str, split: str = "all", max_pixels: int = DEFAULT_MAX_PIXELS,
                 workers: int = 1) -> Dataset:
    """Loads every sequence directory under `root` and filters by split."""
    if split not in SPLIT_CHOICES:
        raise ValueError(f"split must be one of {SPLIT_CHOICES}, got {split!r}")
    if not os.path.isdir(root):
        raise EmptyDataset(f"Dataset root {root!r} does not exist")

    names = sorted(
        name for name in os.listdir(root)
        if os.path.isdir(os.path.join(root, name)) and not name.startswith(".")
    )
    if split != "all":
        names = [name for name in names if classify(name) == split]
    if not names:
        raise EmptyDataset(f"No {split} sequences found under {root!r}")

    logging.info(f"🚀 Loading {len(names)} sequences from {root}")
    loader = partial(load_sequence, max_pixels=max_pixels)
    paths = [os.path.join(root, name) for name in names]
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            sequences = list(executor.map(loader, paths))
    else:
        sequences = [loader(path) for path in paths]

    dataset = Dataset(os.path.abspath(root), tuple(sequences))
    counts = dataset.counts
    logging.info(
        f"✅ Loaded {len(sequences)} sequences "
        f"({counts['illumination']} illumination / {counts['viewpoint']} viewpoint)"
    )
    return dataset


def from_sequences(sequences: List[Sequence], root: str = "<memory>") -> Dataset:
    """Builds a Dataset from in-memory sequences (sorted by id)."""
    if not sequences:
        raise EmptyDataset("A dataset needs at least one sequence")
    ordered = tuple(sorted(sequences, key=lambda s: s.id))
    ids = [s.id for s in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("Sequence ids must be unique")
    return Dataset(root, ordered)
