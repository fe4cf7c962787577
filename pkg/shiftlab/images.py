"""
Loads a two-domain image dataset laid out as root/{source,target}/{class_name}/*.{png,jpg} and reduces every image to
a fixed-length feature vector.
"""
import dataclasses
import enum
import logging
import typing
from pathlib import Path

import numpy as np
from PIL import Image, ImageOps, UnidentifiedImageError

from .data import DOMAINS, DatasetSplit, Sample, SOURCE, TARGET, derive_seed, split_72_8_20
from .errors import ShiftLabConfigError, ShiftLabDataError, ShiftLabDataIOError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {'.png', '.jpg', '.jpeg'}


class FeatureKind(enum.Enum):
    flatten = 'flatten'
    """Every pixel of every channel, scaled to [0, 1]"""
    pool = 'pool'
    """The mean of every channel over each cell of a grid"""


@dataclasses.dataclass(frozen=True)
class ImageFolderSpec:
    root: str
    target_size: typing.Tuple[int, int] = (32, 32)
    """(width, height) every image is resized to"""
    features: FeatureKind = FeatureKind.flatten
    pool_grid: int = 4
    augment: bool = False
    """True to replace every training image with a randomly flipped and rescaled version of itself"""
    max_zoom: float = 1.25
    seed: int = 0

    def validate(self):
        if min(self.target_size) < 1:
            raise ShiftLabConfigError('The image size must be positive, got {}'.format(self.target_size),
                                      key='dataset.image_size')
        if self.features is FeatureKind.pool and not 1 <= self.pool_grid <= min(self.target_size):
            raise ShiftLabConfigError(
                'The pooling grid ({}) must lie between 1 and the image size {}'.format(self.pool_grid,
                                                                                        self.target_size),
                key='dataset.pool_grid'
            )
        if self.max_zoom < 1:
            raise ShiftLabConfigError('The maximal zoom must be at least 1, got {}'.format(self.max_zoom),
                                      key='dataset.max_zoom')


def list_image_files(root: Path) -> typing.Dict[str, typing.Dict[str, typing.List[Path]]]:
    """
    :return: For every domain, the sorted image paths of every class directory
    """
    tree = {}
    for domain in DOMAINS:
        domain_dir = root / domain
        classes = {}
        if domain_dir.is_dir():
            for class_dir in sorted(p for p in domain_dir.iterdir() if p.is_dir()):
                classes[class_dir.name] = sorted(
                    p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
                )
        tree[domain] = classes
    return tree


def read_image(path: Path, size: typing.Tuple[int, int]) -> Image.Image:
    try:
        with Image.open(path) as image:
            return image.convert('RGB').resize(size, Image.BILINEAR)
    except (OSError, UnidentifiedImageError) as e:
        raise ShiftLabDataIOError('Could not read the image {}: {}'.format(path, e)) from e


def augment_image(image: Image.Image, rng: np.random.Generator, max_zoom: float = 1.25) -> Image.Image:
    """
    Flips the image horizontally with probability 1/2, then zooms in by a random factor in [1, max_zoom] around a
    random center and resizes back, so the output has the size of the input
    """
    if rng.random() < 0.5:
        image = ImageOps.mirror(image)
    zoom = rng.uniform(1.0, max_zoom)
    width, height = image.size
    crop_w = max(1, int(round(width / zoom)))
    crop_h = max(1, int(round(height / zoom)))
    left = int(rng.integers(0, width - crop_w + 1))
    top = int(rng.integers(0, height - crop_h + 1))
    return image.crop((left, top, left + crop_w, top + crop_h)).resize((width, height), Image.BILINEAR)


def image_features(image: Image.Image, kind: FeatureKind, grid: int = 4) -> np.ndarray:
    pixels = np.asarray(image, dtype=np.float64) / 255.0
    if kind is FeatureKind.flatten:
        return pixels.reshape(-1)
    cells = [
        cell.mean(axis=(0, 1))
        for band in np.array_split(pixels, grid, axis=0)
        for cell in np.array_split(band, grid, axis=1)
    ]
    return np.concatenate(cells)


def load_image_folder(spec: ImageFolderSpec) -> DatasetSplit:
    """
    Reads both domains, checks that they share their classes, and splits every domain 72/8/20. Class indices follow
    the sorted class names and ids follow the sorted file paths
    """
    spec.validate()
    root = Path(spec.root)
    if not root.is_dir():
        raise ShiftLabDataIOError('The dataset directory {} does not exist'.format(root))
    tree = list_image_files(root)

    if not any(files for classes in tree.values() for files in classes.values()):
        raise ShiftLabDataError('The dataset directory {} holds no images: the dataset is empty'.format(root))
    source_classes, target_classes = set(tree[SOURCE]), set(tree[TARGET])
    if source_classes != target_classes:
        only = sorted(source_classes.symmetric_difference(target_classes))
        raise ShiftLabDataError(
            'category shift: the classes {} are present in only one domain'.format(', '.join(only))
        )
    class_names = tuple(sorted(source_classes))
    labels = {name: i for i, name in enumerate(class_names)}

    paths = sorted(
        (path.relative_to(root), domain, labels[name])
        for domain, classes in tree.items() for name, files in classes.items() for path in files
    )
    images = {domain: [] for domain in DOMAINS}
    for sample_id, (relative, domain, label) in enumerate(paths):
        images[domain].append((sample_id, read_image(root / relative, spec.target_size), label))

    domains = {}
    for d, domain in enumerate(DOMAINS):
        samples = [
            Sample(i, image_features(image, spec.features, spec.pool_grid), label, domain)
            for i, image, label in images[domain]
        ]
        split = split_72_8_20(samples, derive_seed(spec.seed, d))
        if spec.augment:
            rng = np.random.default_rng(derive_seed(spec.seed, d, 1))
            originals = {i: image for i, image, _ in images[domain]}
            split.train = [
                Sample(s.id, image_features(augment_image(originals[s.id], rng, spec.max_zoom), spec.features,
                                            spec.pool_grid), s.y, domain)
                for s in split.train
            ]
        domains[domain] = split

    logger.info('Loaded %d source and %d target images of %d classes from %s', len(images[SOURCE]),
                len(images[TARGET]), len(class_names), root)
    return DatasetSplit(domains[SOURCE], domains[TARGET], len(class_names), class_names)
