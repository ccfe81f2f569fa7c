"""Answer extraction from raw model responses.

Categorical answers come from the last ``(L`` / ``(L)`` mention of an option
label, numeric answers from the last ``boxed{...}``, and text answers from
the last fenced code block (falling back to the whole trimmed response).
"""

from __future__ import annotations

import re

from .core import Answer, Task, parse_numeric

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_FRAC = re.compile(r"^\\[dt]?frac\{(-?\d+)\}\{(-?\d+)\}$")


def _last_boxed(text: str) -> str | None:
    start = text.rfind("boxed{")
    while start != -1:
        i = start + len("boxed{")
        depth = 1
        j = i
        while j < len(text) and depth:
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
            j += 1
        if depth == 0:
            return text[i : j - 1]
        # unbalanced: try an earlier occurrence
        start = text.rfind("boxed{", 0, start)
    return None


def _strip_outer_braces(s: str) -> str:
    s = s.strip()
    while len(s) >= 2 and s[0] == "{" and s[-1] == "}":
        depth = 0
        for k, ch in enumerate(s):
            depth += ch == "{"
            depth -= ch == "}"
            if depth == 0 and k < len(s) - 1:
                return s
        s = s[1:-1].strip()
    return s


def _numeric(payload: str) -> Answer | None:
    payload = _strip_outer_braces(payload)
    if not payload:
        return None
    m = _FRAC.match(payload.replace(" ", ""))
    if m and int(m.group(2)) != 0:
        payload = f"{m.group(1)}/{m.group(2)}"
    return parse_numeric(payload)


def _categorical(text: str, labels: tuple[str, ...]) -> Answer | None:
    alternatives = "|".join(re.escape(lab) for lab in sorted(labels, key=len, reverse=True))
    # a label must not run on into a longer token, e.g. "(A" inside "(Apple"
    pattern = re.compile(r"\(\s*(" + alternatives + r")(?!\w)")
    hits = pattern.findall(text)
    return Answer("categorical", hits[-1]) if hits else None


def _code(text: str) -> Answer | None:
    blocks = _FENCE.findall(text)
    payload = blocks[-1] if blocks else text
    payload = payload.strip()
    return Answer("text", payload) if payload else None


def extract_answer(raw_text: str, task: Task) -> Answer | None:
    if task.kind == "categorical":
        return _categorical(raw_text, task.option_labels or ())
    if task.kind == "numeric":
        boxed = _last_boxed(raw_text)
        return _numeric(boxed) if boxed is not None else None
    return _code(raw_text)
