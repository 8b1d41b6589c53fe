"""Fusion and refinement prompt templates.

Templates are plain text files with ``{name}`` placeholders; each placeholder
must appear exactly once and is substituted in a single pass, so payloads that
themselves contain ``{query}`` or ``Response 2:`` are embedded verbatim.

When rendering for the simulated backend, embedded responses are wrapped in
sentinel marker lines so the backend can recover the parents exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .core import Candidate, Prompt
from .errors import TemplateError

FUSION = "fusion"
REFINEMENT = "refinement"
PLAIN = "plain"

_FIELDS = {
    FUSION: ("query", "response_1", "response_2"),
    REFINEMENT: ("query", "response"),
}
_FILES = {FUSION: "fusion.txt", REFINEMENT: "refine.txt"}
_PLACEHOLDER = re.compile(r"\{([a-z_0-9]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    body: str

    def __post_init__(self) -> None:
        if self.kind not in _FIELDS:
            raise TemplateError(f"unknown template kind {self.kind!r}")
        found = _PLACEHOLDER.findall(self.body)
        for name in _FIELDS[self.kind]:
            if found.count(name) != 1:
                raise TemplateError(f"{self.kind} template must contain {{{name}}} exactly once")
        extra = set(found) - set(_FIELDS[self.kind])
        if extra:
            raise TemplateError(f"{self.kind} template has unknown placeholders {sorted(extra)}")

    @property
    def fields(self) -> tuple[str, ...]:
        return _FIELDS[self.kind]

    def render(self, **values: str) -> str:
        missing = set(self.fields) - set(values)
        if missing:
            raise TemplateError(f"missing template values {sorted(missing)}")
        return _PLACEHOLDER.sub(lambda m: values[m.group(1)] if m.group(1) in values else m.group(0), self.body)


def _strip_final_newline(text: str) -> str:
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def _builtin(kind: str) -> PromptTemplate:
    body = resources.files("memetron").joinpath("templates", _FILES[kind]).read_text(encoding="utf-8")
    return PromptTemplate(kind, _strip_final_newline(body))


def load_template(kind: str, path: Union[str, Path, None] = None) -> PromptTemplate:
    """Built-in template for ``kind``, or a custom one read from ``path``."""
    if kind not in _FIELDS:
        raise TemplateError(f"unknown template kind {kind!r}")
    if path is None:
        return _builtin(kind)
    return PromptTemplate(kind, _strip_final_newline(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Sentinels:
    begin: str = "<<<MEMETRON-BEGIN {name}>>>"
    end: str = "<<<MEMETRON-END {name}>>>"

    def wrap(self, name: str, text: str) -> str:
        return f"{self.begin.format(name=name)}\n{text}\n{self.end.format(name=name)}"

    def has(self, rendered: str, name: str) -> bool:
        return self.begin.format(name=name) + "\n" in rendered

    def extract(self, rendered: str, name: str) -> str:
        open_marker = self.begin.format(name=name) + "\n"
        close_marker = "\n" + self.end.format(name=name)
        start = rendered.find(open_marker)
        if start < 0:
            raise TemplateError(f"no {name} section in prompt")
        start += len(open_marker)
        stop = rendered.find(close_marker, start)
        if stop < 0:
            raise TemplateError(f"unterminated {name} section in prompt")
        return rendered[start:stop]


DEFAULT_SENTINELS = Sentinels()


def render_fusion(
    x: Prompt,
    y_i: Candidate,
    y_j: Candidate,
    template: Optional[PromptTemplate] = None,
    sentinels: Optional[Sentinels] = None,
) -> str:
    if y_i.id is not None and y_i.id == y_j.id:
        raise TemplateError(f"fusion needs two distinct parents, got id {y_i.id} twice")
    template = template or load_template(FUSION)
    a, b = y_i.text, y_j.text
    if sentinels is not None:
        a, b = sentinels.wrap("response_1", a), sentinels.wrap("response_2", b)
    return template.render(query=x.text, response_1=a, response_2=b)


def render_refine(
    x: Prompt,
    y_t: Candidate,
    template: Optional[PromptTemplate] = None,
    sentinels: Optional[Sentinels] = None,
) -> str:
    if not y_t.text:
        raise TemplateError("cannot refine an empty response")
    template = template or load_template(REFINEMENT)
    text = y_t.text
    if sentinels is not None:
        text = sentinels.wrap("response", text)
    return template.render(query=x.text, response=text)


# Instruction openings of the built-in templates; used to tell a malformed
# fusion/refinement prompt (no sentinels) apart from a plain query.
_SIGNATURES = {
    FUSION: "You are an expert at fusing responses",
    REFINEMENT: "You are a professional writing assistant specialized in refining responses",
}


def classify(rendered: str, sentinels: Sentinels = DEFAULT_SENTINELS) -> str:
    if sentinels.has(rendered, "response_1") or sentinels.has(rendered, "response_2"):
        return FUSION
    if sentinels.has(rendered, "response"):
        return REFINEMENT
    for kind, signature in _SIGNATURES.items():
        if signature in rendered:
            raise TemplateError(f"{kind} prompt has no extractable parent text (missing sentinels)")
    return PLAIN


def parse_fusion(rendered: str, sentinels: Sentinels = DEFAULT_SENTINELS) -> tuple[str, str]:
    return sentinels.extract(rendered, "response_1"), sentinels.extract(rendered, "response_2")


def parse_refine(rendered: str, sentinels: Sentinels = DEFAULT_SENTINELS) -> str:
    return sentinels.extract(rendered, "response")
