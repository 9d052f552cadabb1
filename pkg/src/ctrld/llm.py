"""Prompts for the language-model judgment baselines and a chat-completion client.

Every verdict is read from a final ``Answer: Truthful`` / ``Answer: Deceptive``
line; a reply without one is an abstention, never a default label.
"""

from __future__ import annotations

import hashlib
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import httpx

from .board import GameState
from .extract import Message, Proposal
from .orders import Action

DIRECT = "direct"
ALIGNMENT = "alignment"
TRUTHFUL = "truthful"
DECEPTIVE = "deceptive"

ANSWER_RE = re.compile(r"^\s*\**\s*answer\s*\**\s*:\s*\**\s*(truthful|deceptive)\b", re.IGNORECASE)

PREAMBLE = (
    "You are reviewing a Diplomacy negotiation for a less experienced player. "
    "You are given the board, the messages exchanged with another power, "
    "and the orders that power is predicted to submit this turn."
)
STEP_BY_STEP = "Reason step by step before giving your verdict."


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    def __init__(self, endpoint: str, detail: str):
        self.endpoint = endpoint
        super().__init__(f"{endpoint}: {detail}")


class AbstainError(LLMError):
    """The reply carried no parseable answer line."""

    def __init__(self, raw: str):
        self.raw = raw
        super().__init__("reply has no 'Answer: Truthful|Deceptive' line")


@dataclass(frozen=True)
class PromptSpec:
    mode: str = DIRECT
    cot: bool = False
    include_values: bool = False
    board_summary: str = ""
    message_history: str = ""
    predicted_orders: str = ""
    question: str = ""
    predicted_power: str = ""

    def __post_init__(self):
        if self.mode not in (DIRECT, ALIGNMENT):
            raise ValueError(f"prompt mode must be {DIRECT} or {ALIGNMENT}")


@dataclass(frozen=True)
class JudgmentResult:
    label: str
    rationale: str
    raw: str

    @property
    def deceptive(self) -> bool:
        return self.label == DECEPTIVE


def board_summary(state: GameState) -> str:
    parts = []
    for power in state.powers:
        units = [f"{u.kind} {u.loc}" for u in state.units_of(power)]
        parts.append(f"{power}: {units}")
    centers = "; ".join(f"{p}: {sorted(state.centers_of(p))}" for p in state.powers if state.centers_of(p))
    return ", ".join(parts) + (f"\nSupply centers: {centers}" if centers else "")


def history_block(history: Sequence[Message]) -> str:
    return "\n\n".join(f'Message from {m.sender}: "{m.text}"' for m in history)


def _fmt(x: float) -> str:
    return repr(float(x))


def question_block(
    mode: str, observer: str, suspect: str, cot: bool = False, values: Sequence[float] | None = None
) -> str:
    if mode == DIRECT:
        lines = [
            f"I am playing as {observer}. Decide whether {suspect} is being deceptive toward me, "
            "given everything above. Point out any statement you find suspicious."
        ]
    else:
        lines = [
            f"I am playing as {observer}. Go through {suspect}'s predicted orders one at a time and say "
            "whether each is consistent with what they told me and with the board. "
            "Treat the proposal as deceptive if the inconsistent orders are at least as many as the consistent ones."
        ]
    if values is not None:
        u1, u2, u3 = values
        lines.append(
            f"Counterfactual value signals for this proposal (bait, switch, edge): ({_fmt(u1)}, {_fmt(u2)}, {_fmt(u3)})"
        )
    if cot:
        lines.append(STEP_BY_STEP)
    lines.append("End your reply with exactly one line: 'Answer: Truthful' or 'Answer: Deceptive'.")
    return "\n".join(lines)


def make_spec(
    state: GameState,
    history: Sequence[Message],
    proposal: Proposal | None,
    predicted: Action,
    mode: str = DIRECT,
    cot: bool = False,
    include_values: bool = False,
    values: Sequence[float] | None = None,
    observer: str | None = None,
) -> PromptSpec:
    """Prompt blocks for judging ``predicted.power``; ``observer`` is needed only without a proposal."""
    if proposal is not None:
        if predicted.power != proposal.proposer:
            raise ValueError(f"predicted orders are for {predicted.power}, not the proposer {proposal.proposer}")
        observer = proposal.recipient
    if observer is None:
        raise ValueError("observer power is required when there is no proposal")
    if include_values and values is None:
        raise ValueError("include_values needs the (bait, switch, edge) values")
    return PromptSpec(
        mode=mode,
        cot=cot,
        include_values=include_values,
        board_summary=board_summary(state),
        message_history=history_block(history),
        predicted_orders=str(list(predicted.rendered())),
        question=question_block(mode, observer, predicted.power, cot, values if include_values else None),
        predicted_power=predicted.power,
    )


def render_prompt(spec: PromptSpec) -> str:
    blocks = [
        PREAMBLE,
        f"**Predicted Orders of {spec.predicted_power}:**\n\n{spec.predicted_orders}",
        f"**Board State:**\n\n{spec.board_summary}",
        f"**Message History:**\n\n{spec.message_history}",
        f"**Question ({'Direct' if spec.mode == DIRECT else 'Alignment'} Judgment):**\n\n{spec.question}",
    ]
    return "\n\n".join(blocks) + "\n"


def build_prompt(
    state: GameState,
    history: Sequence[Message],
    proposal: Proposal | None,
    predicted: Action,
    mode: str = DIRECT,
    cot: bool = False,
    include_values: bool = False,
    values: Sequence[float] | None = None,
    observer: str | None = None,
) -> str:
    return render_prompt(
        make_spec(state, history, proposal, predicted, mode, cot, include_values, values, observer)
    )


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def parse_judgment(raw: str) -> JudgmentResult:
    """Take the last answer line; everything before it is the rationale."""
    lines = raw.splitlines()
    for k in range(len(lines) - 1, -1, -1):
        m = ANSWER_RE.match(lines[k])
        if m:
            return JudgmentResult(m.group(1).lower(), "\n".join(lines[:k]).strip(), raw)
    raise AbstainError(raw)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    auth_env_var: str = "CTRLD_LLM_TOKEN"
    timeout_s: float = 60.0
    max_concurrency: int = 4
    retries: int = 0
    temperature: float = 0.0


class Backend(Protocol):
    name: str

    def complete(self, prompt: str) -> str: ...


class HttpBackend:
    """Single-turn chat-completion requests."""

    def __init__(self, config: EndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self.name = f"{config.url}#{config.model}"
        self._transport = transport

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(cfg.auth_env_var)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
        last: Exception | None = None
        with httpx.Client(timeout=cfg.timeout_s, transport=self._transport) as client:
            for _ in range(cfg.retries + 1):
                try:
                    resp = client.post(cfg.url, json=body, headers=headers)
                    resp.raise_for_status()
                    data = resp.json()
                    return data["choices"][0]["message"]["content"] or ""
                except httpx.TimeoutException as exc:
                    last = TransportError(self.name, f"timed out after {cfg.timeout_s}s ({exc})")
                except httpx.HTTPError as exc:
                    last = TransportError(self.name, str(exc))
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    last = TransportError(self.name, f"malformed response: {exc!r}")
        assert last is not None
        raise last


class StubBackend:
    """Offline replies keyed by prompt hash; unknown prompts get an empty reply."""

    name = "stub"

    def __init__(self, answers: Mapping[str, str]):
        self.answers = dict(answers)

    def complete(self, prompt: str) -> str:
        ans = self.answers.get(prompt_hash(prompt))
        if ans is None:
            return ""
        if ans.lower() in (TRUTHFUL, DECEPTIVE):
            return f"Stub verdict.\nAnswer: {ans.capitalize()}"
        return ans


def query(backend: Backend, prompt: str) -> JudgmentResult:
    return parse_judgment(backend.complete(prompt))


def query_many(
    backend: Backend, prompts: Mapping[str, str], max_concurrency: int = 1
) -> dict[str, JudgmentResult | LLMError]:
    """Judge many prompts; failures are returned in place of results, keyed by id."""

    def one(key: str):
        try:
            return key, query(backend, prompts[key])
        except LLMError as exc:
            return key, exc

    keys = sorted(prompts)
    if max_concurrency <= 1:
        return dict(one(k) for k in keys)
    with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
        return dict(pool.map(one, keys))
