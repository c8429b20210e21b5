"""Image references and the content-addressed image store."""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .digests import sha256_bytes

MIN_RESOLUTION = 512

_EXT = {"PNG": "png", "JPEG": "jpg", "WEBP": "webp", "BMP": "bmp", "GIF": "gif", "TIFF": "tiff"}


class ResolutionTooLow(ValueError):
    pass


class DigestMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ImageRef:
    id: str
    location: str
    width: int
    height: int
    sha256: str

    def read_bytes(self) -> bytes:
        data = Path(self.location).read_bytes()
        if sha256_bytes(data) != self.sha256:
            raise DigestMismatch(f"{self.location}: content does not match recorded digest")
        return data

    def to_obj(self) -> dict:
        return {"id": self.id, "location": self.location, "width": self.width, "height": self.height, "sha256": self.sha256}

    @classmethod
    def from_obj(cls, obj: dict) -> "ImageRef":
        return cls(**{k: obj[k] for k in ("id", "location", "width", "height", "sha256")})


def probe(data: bytes) -> tuple[int, int, str]:
    """Return ``(width, height, extension)`` for encoded image bytes."""
    with Image.open(io.BytesIO(data)) as im:
        return im.width, im.height, _EXT.get(im.format or "", "bin")


def check_resolution(width: int, height: int, what: str = "image") -> None:
    if min(width, height) < MIN_RESOLUTION:
        raise ResolutionTooLow(f"{what} is {width}x{height}; minimum side is {MIN_RESOLUTION}px")


def load_image_ref(path: str | os.PathLike, image_id: str | None = None) -> ImageRef:
    path = Path(path)
    data = path.read_bytes()
    width, height, _ = probe(data)
    check_resolution(width, height, str(path))
    return ImageRef(id=image_id or path.stem, location=str(path), width=width, height=height, sha256=sha256_bytes(data))


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ImageStore:
    """Digest-named files under ``<root>/images/<first2>/<digest>.<ext>``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root) / "images"

    def path_for(self, digest: str, ext: str) -> Path:
        return self.root / digest[:2] / f"{digest}.{ext}"

    def put(self, data: bytes) -> ImageRef:
        width, height, ext = probe(data)
        digest = sha256_bytes(data)
        path = self.path_for(digest, ext)
        if not path.exists():
            atomic_write(path, data)
        return ImageRef(id=digest[:16], location=str(path), width=width, height=height, sha256=digest)
