"""
Helpers shared by the management commands: input loading, digests,
manifests and the mapping from failures to exit codes.
"""

from __future__ import annotations

import hashlib
import logging
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from evalkit.models import AnnotatedCorpus
from haarboost_project.exceptions import DataError, TrainingError
from imaging import services as imaging_svc
from imaging.models import GrayImage

from .models import RunManifest

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4

# Django's own command options; they never change what a command computes
_RUNTIME_OPTIONS = {
    "verbosity", "settings", "pythonpath", "traceback", "no_color", "force_color", "skip_checks", "jobs",
}


def exit_code_for(exc: BaseException) -> int:
    """Exit code for a failure: 2 configuration, 3 data, 4 training, 1 otherwise."""
    if isinstance(exc, ValidationError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, TrainingError):
        return EXIT_TRAINING
    return 1


def reason(exc: BaseException) -> str:
    """One-line description of a failure."""
    if isinstance(exc, ValidationError):
        text = "; ".join(exc.messages)
    elif isinstance(exc, OSError) and exc.filename is not None:
        text = f"{exc.strerror or exc}: {exc.filename}"
    else:
        text = str(exc)
    return " ".join(f"{type(exc).__name__}: {text}".split())


def tool_version() -> str:
    try:
        return metadata.version("haarboost")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def image_paths(path: Union[str, Path]) -> List[Path]:
    """A directory's PGM/PPM files sorted by name, or the file itself."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path} does not exist")
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [path]


def read_images(path: Union[str, Path]) -> List[GrayImage]:
    paths = image_paths(path)
    if not paths:
        raise DataError(f"no PGM or PPM images in {path}")
    return [imaging_svc.read_image(p) for p in paths]


def read_windows(path: Union[str, Path], base: int) -> np.ndarray:
    """
    Face windows as an (n, base, base) stack; crops of another size are
    resampled with nearest neighbour.
    """
    windows = []
    for img in read_images(path):
        pixels = img.pixels
        if pixels.shape != (base, base):
            pixels = imaging_svc.resize_nearest(pixels, base, base)
        windows.append(pixels)
    logger.info(f"read {len(windows)} face windows from {path}")
    return np.stack(windows).astype(np.uint8)


def input_digests(paths: Iterable[Union[str, Path]]) -> Dict[str, str]:
    """sha256 of every input file; directories contribute their image files."""
    digests: Dict[str, str] = {}
    for path in paths:
        for p in image_paths(path) if Path(path).is_dir() else [Path(path)]:
            digests[str(p)] = file_digest(p)
    return digests


def sidecar(output: Union[str, Path], suffix: str) -> Path:
    """``model.json`` -> ``model<suffix>`` in the same directory."""
    output = Path(output)
    return output.with_name(output.stem + suffix)


def _plain(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def build_manifest(
    command: str,
    options: Mapping[str, Any],
    inputs: Iterable[Union[str, Path]] = (),
    outputs: Sequence[Union[str, Path]] = (),
) -> RunManifest:
    kept = {k: _plain(v) for k, v in sorted(options.items()) if k not in _RUNTIME_OPTIONS}
    return RunManifest(
        command=command,
        options=kept,
        config=settings.HAARBOOST,
        seed=int(options.get("seed") or 0),
        inputs=input_digests(inputs),
        outputs=[Path(p).name for p in outputs],
        tool_version=tool_version(),
    )


def corpus_files(corpus: AnnotatedCorpus) -> List[Path]:
    root = corpus.root or Path(".")
    return [root / entry.path for entry in corpus.entries]
