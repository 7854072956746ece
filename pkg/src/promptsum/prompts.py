"""Control and latent prompt rendering, and prompt+document input assembly.

Prompt grammar (byte-exact after tokenization):

    summarize:
    summarize with length <int>:
    summarize with abstractiveness <int>:
    summarize with <int> sentences:
    keywords (<kw>(, <kw>)*) summarize:
    summarize with entities <TYPE>(<e>(, <e>)*)( <TYPE>(...))*:
    summarize with length <int> and abstractiveness <int>:

The latent prompt ``summarize:`` carries no control values; the uncontrolled
branch of the model runs on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Document, tokenize


class PromptError(ValueError):
    """A prompt could not be rendered from the given signals."""


class ControlKind(Enum):
    LENGTH = "length"
    ABSTRACTIVENESS = "abstractiveness"
    NUM_SENTENCES = "sentences"
    KEYWORDS = "keywords"
    ENTITIES = "entities"
    LENGTH_ABSTRACTIVENESS = "length_abstractiveness"
    LATENT = "latent"


# Kinds usable as training control signals (everything but the latent prompt).
CONTROL_KINDS = (
    ControlKind.LENGTH,
    ControlKind.ABSTRACTIVENESS,
    ControlKind.NUM_SENTENCES,
    ControlKind.KEYWORDS,
    ControlKind.ENTITIES,
    ControlKind.LENGTH_ABSTRACTIVENESS,
)

LATENT_PROMPT_TEXT = "summarize:"


@dataclass(frozen=True)
class Prompt:
    kind: ControlKind
    text: str
    tokens: tuple[str, ...]


def _require(kind: ControlKind, field: str, value) -> None:
    if value is None or (hasattr(value, "__len__") and len(value) == 0):
        raise PromptError(f"{kind.value} prompt requires a non-empty {field!r} signal")


def render_prompt(kind: ControlKind, signals=None) -> Prompt:
    """Render the prompt for ``kind`` from the given signals.

    ``signals`` is any object exposing the fields the kind needs
    (:class:`~promptsum.signals.ControlSignals` or an ad-hoc namespace for
    user-specified control values); the latent kind ignores it entirely.
    """
    if kind is ControlKind.LATENT:
        text = LATENT_PROMPT_TEXT
    elif kind is ControlKind.LENGTH:
        _require(kind, "length_bin", getattr(signals, "length_bin", None))
        text = f"summarize with length {signals.length_bin}:"
    elif kind is ControlKind.ABSTRACTIVENESS:
        _require(kind, "abstractiveness_bin", getattr(signals, "abstractiveness_bin", None))
        text = f"summarize with abstractiveness {signals.abstractiveness_bin}:"
    elif kind is ControlKind.NUM_SENTENCES:
        _require(kind, "n_sentences", getattr(signals, "n_sentences", None))
        text = f"summarize with {signals.n_sentences} sentences:"
    elif kind is ControlKind.KEYWORDS:
        _require(kind, "keywords", getattr(signals, "keywords", None))
        text = "keywords (" + ", ".join(signals.keywords) + ") summarize:"
    elif kind is ControlKind.ENTITIES:
        _require(kind, "entities", getattr(signals, "entities", None))
        groups: dict[str, list[str]] = {}
        for etype, surface in signals.entities:
            name = surface if isinstance(surface, str) else " ".join(surface)
            groups.setdefault(etype, []).append(name)
        rendered = " ".join(
            f"{etype}({', '.join(names)})" for etype, names in groups.items()
        )
        text = f"summarize with entities {rendered}:"
    elif kind is ControlKind.LENGTH_ABSTRACTIVENESS:
        _require(kind, "length_bin", getattr(signals, "length_bin", None))
        _require(kind, "abstractiveness_bin", getattr(signals, "abstractiveness_bin", None))
        text = (
            f"summarize with length {signals.length_bin}"
            f" and abstractiveness {signals.abstractiveness_bin}:"
        )
    else:
        raise PromptError(f"unknown control kind: {kind!r}")
    return Prompt(kind=kind, text=text, tokens=tuple(tokenize(text)))


def latent_prompt() -> Prompt:
    return render_prompt(ControlKind.LATENT)


def build_input(prompt: Prompt, doc: Document, max_len: int) -> tuple[str, ...]:
    """Prepend the prompt to the document tokens, truncating the document
    tail so the total length fits ``max_len``. The prompt itself is never
    truncated (control information must survive)."""
    n_prompt = len(prompt.tokens)
    if max_len <= n_prompt + 1:
        raise PromptError(
            f"input budget {max_len} leaves no room for the document after a "
            f"{n_prompt}-token prompt"
        )
    return prompt.tokens + tuple(doc.tokens[: max_len - n_prompt])


# ---------------------------------------------------------------------------
# Control-flag mini-grammar (CLI): kind=value[,value...]
# ---------------------------------------------------------------------------

CONTROL_FLAG_HELP = (
    "control flag grammar: length=<int> | abstractiveness=<int> | sentences=<int> | "
    "keywords=<kw>[,<kw>...] | entities=<TYPE>:<surface>[,<TYPE>:<surface>...] | "
    "length_abstractiveness=<int>,<int>"
)


def parse_control_flag(flag: str) -> Prompt:
    """Parse a ``kind=value[,value...]`` flag into a rendered Prompt."""
    if "=" not in flag:
        raise PromptError(f"bad control flag {flag!r}; {CONTROL_FLAG_HELP}")
    kind_name, _, raw = flag.partition("=")
    kind_name = kind_name.strip().lower()
    values = [v.strip() for v in raw.split(",")] if raw.strip() else []

    class _Override:
        length_bin = None
        abstractiveness_bin = None
        n_sentences = None
        keywords: tuple = ()
        entities: tuple = ()

    sig = _Override()
    try:
        if kind_name == "length":
            sig.length_bin = int(_single(values, flag))
            kind = ControlKind.LENGTH
        elif kind_name == "abstractiveness":
            sig.abstractiveness_bin = int(_single(values, flag))
            kind = ControlKind.ABSTRACTIVENESS
        elif kind_name == "sentences":
            sig.n_sentences = int(_single(values, flag))
            kind = ControlKind.NUM_SENTENCES
        elif kind_name == "keywords":
            if not values:
                raise PromptError(f"control flag {flag!r} has no keywords")
            sig.keywords = tuple(tok for v in values for tok in tokenize(v))
            if not sig.keywords:
                raise PromptError(f"control flag {flag!r} has no keywords")
            kind = ControlKind.KEYWORDS
        elif kind_name == "entities":
            entities = []
            for v in values:
                if ":" not in v:
                    raise PromptError(
                        f"bad entity {v!r} in {flag!r}; expected TYPE:surface"
                    )
                etype, _, surface = v.partition(":")
                entities.append((etype.strip(), tuple(tokenize(surface))))
            if not entities:
                raise PromptError(f"control flag {flag!r} has no entities")
            sig.entities = tuple(entities)
            kind = ControlKind.ENTITIES
        elif kind_name == "length_abstractiveness":
            if len(values) != 2:
                raise PromptError(f"control flag {flag!r} needs exactly two values")
            sig.length_bin = int(values[0])
            sig.abstractiveness_bin = int(values[1])
            kind = ControlKind.LENGTH_ABSTRACTIVENESS
        else:
            raise PromptError(f"unknown control kind {kind_name!r}; {CONTROL_FLAG_HELP}")
    except ValueError as exc:
        if isinstance(exc, PromptError):
            raise
        raise PromptError(f"bad value in control flag {flag!r}: {exc}") from exc
    return render_prompt(kind, sig)


def _single(values: list[str], flag: str) -> str:
    if len(values) != 1:
        raise PromptError(f"control flag {flag!r} needs exactly one value")
    return values[0]
