"""Versioned surface-template packs with ``{slot}`` syntax."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from ..scene_core import concepts

PACK_VERSION = 1
_LINE = re.compile(r"^(?P<id>[\w.]+)\s*(?:\[(?P<tags>[^\]]*)\])?\s*:\s*(?P<surface>.+)$")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    template_id: str
    family: str
    surface: str
    concepts: Tuple[str, ...] = ()

    @property
    def slots(self) -> Tuple[str, ...]:
        return tuple(f for _, f, _, _ in string.Formatter().parse(self.surface) if f)

    def fill(self, **values: str) -> str:
        missing = [s for s in self.slots if s not in values]
        if missing:
            raise TemplateError(f"template {self.template_id} missing slot(s) {missing}")
        return self.surface.format(**values)


class TemplatePack:
    def __init__(self, templates: List[Template], version: int = PACK_VERSION):
        self.version = version
        self._by_family: Dict[str, List[Template]] = {}
        for t in templates:
            self._by_family.setdefault(t.family, []).append(t)

    def family(self, name: str) -> List[Template]:
        try:
            return self._by_family[name]
        except KeyError:
            raise TemplateError(f"no templates for family {name!r}") from None

    def for_concept(self, family: str, concept: str) -> List[Template]:
        return [t for t in self.family(family) if concept in t.concepts]

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_family.values())

    @classmethod
    def parse(cls, text: str, source: str = "<pack>") -> "TemplatePack":
        version: Optional[int] = None
        section: Optional[str] = None
        templates: List[Template] = []
        seen = set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("version:"):
                version = int(line.split(":", 1)[1])
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                continue
            m = _LINE.match(line)
            if m is None or section is None:
                raise TemplateError(f"{source}:{lineno}: cannot parse template line")
            tid = m.group("id")
            if tid in seen:
                raise TemplateError(f"{source}:{lineno}: duplicate template id {tid}")
            seen.add(tid)
            tags = tuple(t.strip() for t in (m.group("tags") or "").split(",") if t.strip())
            for tag in tags:
                if not concepts.is_cataloged(tag):
                    raise TemplateError(f"{source}:{lineno}: concept {tag!r} not in catalog")
            templates.append(Template(tid, section, m.group("surface").strip(), tags))
        if version != PACK_VERSION:
            raise TemplateError(f"{source}: unsupported template pack version {version}")
        pack = cls(templates, version)
        if len(pack._by_family.get("pointing", [])) < 28:
            raise TemplateError(f"{source}: pointing family needs at least 28 templates")
        return pack

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "TemplatePack":
        if path is None:
            text = resources.files("stforge.data").joinpath("templates_v1.txt").read_text(encoding="utf-8")
            return cls.parse(text, "templates_v1.txt")
        return cls.parse(Path(path).read_text(encoding="utf-8"), str(path))


_DEFAULT: Optional[TemplatePack] = None


def default_pack() -> TemplatePack:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplatePack.load()
    return _DEFAULT
