"""Agent prompt templates and the prompt resource library.

Prompt texts are configuration, not code: they live as UTF-8 text files with
``{placeholder}`` syntax in a prompts directory (the packaged defaults under
``metagente/resources/prompts`` can be overridden per run). Structured-output
schemas are stored alongside as JSON-schema documents. Every resource is
hashed so run artifacts can record exactly which prompt texts produced them.
"""

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ._canonical import sha256_hex

TEXT_RESOURCES = (
    "extractor.txt",
    "summarizer_initial.txt",
    "teacher_system.txt",
    "teacher_user.txt",
    "prompt_creator_system.txt",
    "prompt_creator_user.txt",
)
SCHEMA_RESOURCES = ("teacher.schema.json", "prompt_creator.schema.json")


def template_placeholders(template: str) -> frozenset[str]:
    return frozenset(
        name for _, name, _, _ in string.Formatter().parse(template) if name
    )


@dataclass(frozen=True)
class AgentPrompt:
    """One versioned instruction prompt with ``{placeholder}`` substitution."""

    template: str
    version: int = 1
    placeholders: frozenset[str] = field(init=False)

    def __post_init__(self):
        if not self.template.strip():
            raise ValueError("prompt template must be non-empty")
        if self.version < 1:
            raise ValueError(f"prompt version must be >= 1, got {self.version}")
        object.__setattr__(self, "placeholders", template_placeholders(self.template))

    def render(self, **bindings: object) -> str:
        """Substitute placeholders, failing loudly when any is unbound."""
        missing = sorted(self.placeholders - bindings.keys())
        if missing:
            raise ValueError(f"unbound prompt placeholders: {', '.join(missing)}")
        return self.template.format(**{k: bindings[k] for k in self.placeholders})

    def revised(self, new_template: str) -> "AgentPrompt":
        """Next version of this prompt with a replacement template."""
        return AgentPrompt(template=new_template, version=self.version + 1)


class PromptLibrary:
    """Loads prompt texts and structured-output schemas from a directory."""

    def __init__(self, directory: Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._texts: dict[str, str] = {}
        self._schemas: dict[str, dict] = {}
        self.resource_hashes: dict[str, str] = {}
        for name in TEXT_RESOURCES:
            raw = self._read(name)
            self._texts[name] = raw
            self.resource_hashes[name] = sha256_hex(raw)
        for name in SCHEMA_RESOURCES:
            raw = self._read(name)
            self._schemas[name] = json.loads(raw)
            self.resource_hashes[name] = sha256_hex(raw)

    def _read(self, name: str) -> str:
        if self.directory is not None:
            path = self.directory / name
            if not path.is_file():
                raise FileNotFoundError(f"prompt resource not found: {path}")
            return path.read_text(encoding="utf-8")
        return (
            resources.files("metagente")
            .joinpath("resources/prompts")
            .joinpath(name)
            .read_text(encoding="utf-8")
        )

    @property
    def extractor_prompt(self) -> AgentPrompt:
        return AgentPrompt(self._texts["extractor.txt"])

    @property
    def initial_summarizer_prompt(self) -> AgentPrompt:
        return AgentPrompt(self._texts["summarizer_initial.txt"])

    @property
    def teacher_system(self) -> str:
        return self._texts["teacher_system.txt"]

    @property
    def teacher_user_template(self) -> AgentPrompt:
        return AgentPrompt(self._texts["teacher_user.txt"])

    @property
    def creator_system(self) -> str:
        return self._texts["prompt_creator_system.txt"]

    @property
    def creator_user_template(self) -> AgentPrompt:
        return AgentPrompt(self._texts["prompt_creator_user.txt"])

    @property
    def teacher_schema(self) -> dict:
        return self._schemas["teacher.schema.json"]

    @property
    def creator_schema(self) -> dict:
        return self._schemas["prompt_creator.schema.json"]
