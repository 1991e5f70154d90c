"""Prompt templates for the text experts.

Templates are plain text files with ``{name}`` placeholders, shipped as
package assets and overridable by pointing a config at another directory.
Rendering is strict: a placeholder the template references must be
supplied; extra inputs are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class TemplateName(str, Enum):
    PREFERENCE_REASONER = "preference_reasoner"
    ACTOR = "actor"
    REWARDER = "rewarder"
    USER_SIMULATOR = "user_simulator"
    JUDGE_WI = "judge_wi"
    JUDGE_CRED = "judge_cred"


class TemplateNotFoundError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    template: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.template))

    def render(self, **inputs: str) -> str:
        missing = self.placeholders() - set(inputs)
        if missing:
            raise KeyError(f"template {self.name.value} missing inputs: {sorted(missing)}")
        out = self.template
        for key in self.placeholders():
            out = out.replace("{" + key + "}", str(inputs[key]))
        return out


def load_templates(directory: str | Path) -> dict[TemplateName, PromptTemplate]:
    """Load all six templates from ``directory`` (one ``<name>.txt`` each)."""
    directory = Path(directory)
    out = {}
    for name in TemplateName:
        path = directory / f"{name.value}.txt"
        if not path.is_file():
            raise TemplateNotFoundError(f"prompt template file not found: {path}")
        out[name] = PromptTemplate(name=name, template=path.read_text(encoding="utf-8"))
    return out


def default_templates() -> dict[TemplateName, PromptTemplate]:
    """The templates bundled with the package."""
    root = resources.files("stratrec").joinpath("assets/prompts")
    out = {}
    for name in TemplateName:
        res = root.joinpath(f"{name.value}.txt")
        if not res.is_file():
            raise TemplateNotFoundError(f"bundled template missing: {name.value}.txt")
        out[name] = PromptTemplate(name=name, template=res.read_text(encoding="utf-8"))
    return out
