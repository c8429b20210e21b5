"""Versioned prompt templates with ``{slot}`` substitution.

Only ``{identifier}`` patterns are slots, so literal JSON examples such as
``{"id": ...}`` may appear in a template unescaped.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .digests import sha256_bytes

SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class MissingSlot(KeyError):
    def __init__(self, names: list[str], template: str = ""):
        self.names = names
        super().__init__(f"template {template!r} has unbound slots: {', '.join(names)}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    @property
    def version(self) -> str:
        return sha256_bytes(self.text.encode("utf-8"))[:16]

    @property
    def slots(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(SLOT.findall(self.text)))

    def render(self, bindings: Mapping[str, object]) -> str:
        missing = [s for s in self.slots if s not in bindings]
        if missing:
            raise MissingSlot(missing, self.name)
        return SLOT.sub(lambda m: str(bindings[m.group(1)]), self.text)


def load_template(name: str, directory: str | os.PathLike | None = None) -> PromptTemplate:
    """Load ``<name>.txt`` from ``directory``, falling back to the bundled copy."""
    if directory is not None:
        path = Path(directory) / f"{name}.txt"
        if path.exists():
            return PromptTemplate(name, path.read_text(encoding="utf-8"))
    bundled = resources.files("garment_edit").joinpath("templates", f"{name}.txt")
    if not bundled.is_file():
        raise FileNotFoundError(f"no template named {name!r}")
    return PromptTemplate(name, bundled.read_text(encoding="utf-8"))
