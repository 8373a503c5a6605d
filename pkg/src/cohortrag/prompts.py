"""Token budgeting and task-template prompt assembly.

The profile budget is ``L_max - min(|q|, floor(gamma * L_max))``; the
query itself is clipped to the ``gamma`` reservation so the rendered
prompt can never exceed ``L_max`` once template boilerplate is charged.
Documents enter the prompt in retrieval rank order, whole, until one no
longer fits; that one is tail-truncated and everything after it is
dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .corpus import TAG_CLASSES, CorpusHandle, QueryInstance, TaskId
from .errors import ValidationError
from .retrieval import RetrievedDoc


class WhitespaceCounter:
    """Default model-free token counter: whitespace-delimited words."""

    name = "whitespace"

    def count(self, text: str) -> int:
        return len(text.split())


class SubwordCounter:
    """Greedy longest-match subword counter over a vocabulary file.

    The file holds one piece per line; pieces starting with ``##``
    continue a word. A word with no possible segmentation counts as one
    unknown token. Words are lowercased before matching.
    """

    name = "subword"

    def __init__(self, vocab_path: str | Path):
        self.vocab = {
            line.strip()
            for line in Path(vocab_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        self.max_piece = max((len(p.lstrip("#")) for p in self.vocab), default=1)

    def _word_tokens(self, word: str) -> int:
        pieces = 0
        start = 0
        while start < len(word):
            end = len(word)
            found = None
            while end > start:
                piece = word[start:end]
                if start > 0:
                    piece = "##" + piece
                if piece in self.vocab:
                    found = end
                    break
                end -= 1
            if found is None:
                return 1  # whole word becomes a single unknown token
            pieces += 1
            start = found
        return max(pieces, 1)

    def count(self, text: str) -> int:
        return sum(self._word_tokens(w.lower()) for w in text.split())


def count_tokens(text: str, counter) -> int:
    """Token count under the configured counter (deterministic)."""
    return counter.count(text)


@dataclass
class BudgetPolicy:
    l_max: int = 512
    gamma: float = 0.55
    output_cap: int = 128
    counter: object = field(default_factory=WhitespaceCounter)

    def __post_init__(self):
        if self.l_max < 1:
            raise ValidationError("L_max must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")

    @property
    def query_cap(self) -> int:
        return int(self.gamma * self.l_max)


def profile_budget(query_len: int, policy: BudgetPolicy) -> int:
    """Tokens available to profile content for a query of this length."""
    if query_len < 0:
        raise ValidationError("query_len must be >= 0")
    return policy.l_max - min(query_len, policy.query_cap)


@dataclass
class PromptBundle:
    prompt_text: str
    query_tokens: int
    profile_tokens: int
    included_docs: list[tuple[str, str, bool]]  # (doc_id, owner, truncated)
    task_id: TaskId
    degraded: bool = False

    def to_payload(self) -> dict:
        return {
            "prompt_text": self.prompt_text,
            "query_tokens": self.query_tokens,
            "profile_tokens": self.profile_tokens,
            "included_docs": [
                {"doc_id": d, "owner": o, "truncated": t} for d, o, t in self.included_docs
            ],
            "task_id": self.task_id.value,
            "degraded": self.degraded,
        }


_TEMPLATE_FILES = {
    TaskId.LAMP1: "lamp1",
    TaskId.LAMP2: "lamp2",
    TaskId.LAMP3: "lamp3",
    TaskId.LAMP4: "lamp4",
    TaskId.LAMP5: "lamp5",
    TaskId.LAMP7: "lamp7",
    TaskId.SYNTH: "synth",
}

TAG_LIST_TEXT = ", ".join(TAG_CLASSES[:-1]) + ", and " + TAG_CLASSES[-1]


@lru_cache(maxsize=None)
def _load_template(name: str) -> str:
    return resources.files("cohortrag.templates").joinpath(f"{name}.txt").read_text(
        encoding="utf-8"
    )


def _fill(template: str, query: str, profile_items: str) -> str:
    return (
        template.replace("{{profile_items}}", profile_items)
        .replace("{{query}}", query)
        .replace("{{tag_list}}", TAG_LIST_TEXT)
    )


def _format_item(task_id: TaskId, text: str, label: str | None) -> str:
    if task_id in (TaskId.LAMP1, TaskId.LAMP7):
        return text
    if task_id is TaskId.LAMP2:
        if label is None:
            return f"the movie description: {text}"
        return f"the tag for the movie description: {text} is {label}"
    if task_id is TaskId.SYNTH:
        if label is None:
            return f"the item description: {text}"
        return f"the tag for the item description: {text} is {label}"
    if task_id is TaskId.LAMP3:
        return f"{label or 'unrated'} is the score for {text}"
    if task_id is TaskId.LAMP4:
        return f"{label or 'untitled'} is the title for {text}"
    return f"{label or 'untitled'} is a title for {text}"  # LAMP5


def _clip_to_tokens(text: str, cap: int, counter) -> tuple[str, int]:
    """Longest word-prefix of ``text`` counting at most ``cap`` tokens."""
    words = text.split()
    lo, hi, best = 1, len(words), ("", 0)
    while lo <= hi:
        mid = (lo + hi) // 2
        candidate = " ".join(words[:mid])
        tokens = counter.count(candidate)
        if tokens <= cap:
            best = (candidate, tokens)
            lo = mid + 1
        else:
            hi = mid - 1
    return best


def _truncate_to(text: str, budget: int, counter, prefix_parts: list[str]) -> tuple[str, int] | None:
    """Longest word-prefix of ``text`` whose joined section fits ``budget``.

    Returns (prefix, section_tokens) or None when not even one word fits.
    Token costs are measured on the joined profile section so the result
    is exact under any counter.
    """
    words = text.split()
    lo, hi, best = 1, len(words), None
    while lo <= hi:
        mid = (lo + hi) // 2
        candidate = ", ".join(prefix_parts + [" ".join(words[:mid])])
        tokens = counter.count(candidate)
        if tokens <= budget:
            best = (" ".join(words[:mid]), tokens)
            lo = mid + 1
        else:
            hi = mid - 1
    return best


def render_prompt(
    task_id: TaskId,
    query: QueryInstance,
    docs: list[RetrievedDoc],
    policy: BudgetPolicy,
    corpus: CorpusHandle,
) -> PromptBundle:
    """Fill the task template with the query and as many docs as fit.

    Falls back to the non-personalized template (and flags the bundle as
    degraded) when not a single document token fits the budget.
    """
    if task_id not in _TEMPLATE_FILES:
        raise ValidationError(f"no template for task {task_id!r}")
    counter = policy.counter

    raw_query_tokens = counter.count(query.input_text)
    cap = policy.query_cap
    if raw_query_tokens > cap:
        query_text, query_tokens = _clip_to_tokens(query.input_text, cap, counter)
    else:
        query_text = query.input_text
        query_tokens = raw_query_tokens

    budget = profile_budget(raw_query_tokens, policy)
    template = _load_template(_TEMPLATE_FILES[task_id])
    overhead = counter.count(_fill(template, "", ""))
    allowance = max(0, min(budget, policy.l_max - query_tokens - overhead))

    parts: list[str] = []
    included: list[tuple[str, str, bool]] = []
    profile_tokens = 0
    for position, doc in enumerate(docs):
        record = corpus.document(doc.doc_id)
        item = _format_item(task_id, record.text, record.paired_output)
        if position == 0 and task_id in (TaskId.LAMP2, TaskId.SYNTH):
            item = item[:1].upper() + item[1:]
        candidate = ", ".join(parts + [item])
        tokens = counter.count(candidate)
        if tokens <= allowance:
            parts.append(item)
            profile_tokens = tokens
            included.append((doc.doc_id, doc.owner_user_id, False))
            continue
        clipped = _truncate_to(item, allowance, counter, parts)
        if clipped is not None:
            parts.append(clipped[0])
            profile_tokens = clipped[1]
            included.append((doc.doc_id, doc.owner_user_id, True))
        break

    if not included:
        plain = _load_template(_TEMPLATE_FILES[task_id] + "_plain")
        return PromptBundle(
            prompt_text=_fill(plain, query_text, ""),
            query_tokens=query_tokens,
            profile_tokens=0,
            included_docs=[],
            task_id=task_id,
            degraded=True,
        )

    prompt = _fill(template, query_text, ", ".join(parts))
    return PromptBundle(
        prompt_text=prompt,
        query_tokens=query_tokens,
        profile_tokens=profile_tokens,
        included_docs=included,
        task_id=task_id,
        degraded=False,
    )
