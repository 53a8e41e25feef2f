"""Plain-text constitution: heuristic imperatives, secondary frameworks, mission.

File grammar::

    IMPERATIVES
    Reduce suffering in the universe.
    - Increase prosperity in the universe.

    FRAMEWORKS
    ```Universal Declaration of Human Rights
    All human beings are born free and equal in dignity and rights.
    ```

    MISSION
    Assist residents through helpful actions and responsibilities.

Section headers are upper-case lines.  Imperatives are one per line with an
optional ``-`` bullet.  Lines starting with ``#`` outside a fenced block are
comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConstitutionParseError

SECTIONS = ("IMPERATIVES", "FRAMEWORKS", "MISSION")
_HEADER = re.compile(r"^[A-Z][A-Z_ ]*$")
_WS = re.compile(r"\s+")


def _norm(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class Framework:
    name: str
    body: str


@dataclass(frozen=True)
class Section:
    name: str
    text: str


@dataclass(frozen=True)
class Constitution:
    imperatives: tuple[str, ...]
    secondary_frameworks: tuple[Framework, ...] = ()
    mission: str | None = None

    def __post_init__(self):
        if not self.imperatives:
            raise ConstitutionParseError("a constitution needs at least one imperative")
        object.__setattr__(self, "imperatives", tuple(self.imperatives))
        object.__setattr__(self, "secondary_frameworks", tuple(self.secondary_frameworks))

    def render_for(self, request_kind: str = "Judge") -> list[Section]:
        """Constitution excerpt for a cognition request, in precedence order.

        Imperatives come first, then secondary frameworks, then the mission.
        Empty parts are omitted.
        """
        sections = [
            Section(
                "imperatives",
                "\n".join(f"{i}. {text}" for i, text in enumerate(self.imperatives, 1)),
            )
        ]
        if self.secondary_frameworks:
            sections.append(
                Section(
                    "frameworks",
                    "\n\n".join(f"{fw.name}:\n{fw.body}" for fw in self.secondary_frameworks),
                )
            )
        if self.mission:
            sections.append(Section("mission", self.mission))
        return sections

    def serialize(self) -> str:
        out = ["IMPERATIVES", *self.imperatives, ""]
        if self.secondary_frameworks:
            out.append("FRAMEWORKS")
            for fw in self.secondary_frameworks:
                out += [f"```{fw.name}", *fw.body.split("\n"), "```"]
            out.append("")
        if self.mission is not None:
            out += ["MISSION", self.mission, ""]
        return "\n".join(out)


def parse_constitution(text: str) -> Constitution:
    sections: dict[str, list] = {}
    current: str | None = None
    fence: list[str] | None = None
    fence_name = ""

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if fence is not None:
            if line == "```":
                body = "\n".join(_norm(l) for l in fence if l.strip())
                sections["FRAMEWORKS"].append(Framework(fence_name, body))
                fence = None
            else:
                fence.append(raw)
            continue
        if not line or line.startswith("#"):
            continue
        if _HEADER.match(line) and len(line) > 1:
            if line not in SECTIONS:
                raise ConstitutionParseError(f"line {lineno}: unknown section {line!r}")
            if line in sections:
                raise ConstitutionParseError(f"line {lineno}: duplicate section {line!r}")
            current = line
            sections[current] = []
            continue
        if current is None:
            raise ConstitutionParseError(f"line {lineno}: text before any section header")
        if current == "IMPERATIVES":
            item = _norm(line[1:] if line.startswith("-") else line)
            if not item:
                raise ConstitutionParseError(f"line {lineno}: empty imperative")
            sections[current].append(item)
        elif current == "FRAMEWORKS":
            if not line.startswith("```"):
                raise ConstitutionParseError(f"line {lineno}: frameworks must be fenced blocks")
            fence_name = _norm(line[3:])
            if not fence_name:
                raise ConstitutionParseError(f"line {lineno}: framework block needs a name")
            fence = []
        else:
            sections[current].append(_norm(line))

    if fence is not None:
        raise ConstitutionParseError(f"unterminated framework block {fence_name!r}")
    if "IMPERATIVES" not in sections:
        raise ConstitutionParseError("missing IMPERATIVES section")
    if not sections["IMPERATIVES"]:
        raise ConstitutionParseError("IMPERATIVES section is empty")
    mission_lines = sections.get("MISSION")
    return Constitution(
        imperatives=tuple(sections["IMPERATIVES"]),
        secondary_frameworks=tuple(sections.get("FRAMEWORKS", ())),
        mission=" ".join(mission_lines) if mission_lines else None,
    )


def builtin_names() -> list[str]:
    root = resources.files("ace.data") / "constitutions"
    return sorted(p.name.removesuffix(".txt") for p in root.iterdir() if p.name.endswith(".txt"))


def read_constitution_text(path_or_name: str | Path) -> str:
    """Read a constitution file, falling back to a bundled one by name."""
    path = Path(path_or_name)
    if path.exists():
        return path.read_text(encoding="utf-8")
    name = str(path_or_name)
    if name in builtin_names():
        return (resources.files("ace.data") / "constitutions" / f"{name}.txt").read_text(encoding="utf-8")
    raise FileNotFoundError(f"no constitution at {path_or_name}")


def load_constitution(path_or_name: str | Path) -> Constitution:
    return parse_constitution(read_constitution_text(path_or_name))
