"""Pairwise judging: prompt rendering, verdict parsing, remote and simulated backends."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import requests

from .corpus import Proposal
from .errors import (
    JudgeUnavailableError,
    TransportError,
    ValidationError,
    VerdictParseError,
)

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "You are an expert scientific reviewer for the ORNL Neutron Sciences General User "
    "Program. Your role is to compare two proposals based on scientific merit, providing "
    "a numerical score and substantive, constructive comments. Scientific merit is the "
    "primary consideration. Assume the proposal has already passed initial feasibility "
    "review by instrument scientists."
)

USER_PROMPT_TEMPLATE = """Please evaluate and compare the following two proposals:

Proposal A: {proposal_text_a}

Proposal B: {proposal_text_b}

Respond only with valid JSON in this exact structure (no additional text outside the JSON):
{
  "summary": "[Concise summary of each proposal's scientific goals and methods]",
  "comparison": "[summarize aspects Proposal A vs. Proposal B]",
  "reasoning": "[Detailed reasoning which is better and why, only decide the winner after thorough comparison]",
  "winner": ["A" or "B" or "Tie"],
}"""

_REQUIRED_KEYS = ("summary", "comparison", "reasoning", "winner")


class Outcome(str, Enum):
    WIN_A = "A"
    WIN_B = "B"
    TIE = "Tie"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    summary: str
    comparison: str
    reasoning: str


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValidationError("token counts must be nonnegative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass
class JudgeConfig:
    """Everything needed to obtain a verdict for a pair of proposals.

    `transport` is a test seam: a callable (config, messages) -> (reply_text,
    TokenUsage) used instead of HTTP when set.
    """

    backend: str = "simulated"  # "remote" | "simulated"
    model_id: str = "gemini-2.5-flash"
    api_base: str = "https://openrouter.ai/api/v1/chat/completions"
    temperature: float = 0.0
    max_retries: int = 4
    prompt_version: str = "v1"
    two_pass: bool = False
    api_key_env: str = "PAIRRANK_API_KEY"
    timeout: float = 120.0
    initial_backoff: float = 1.0
    backoff_factor: float = 2.0
    # simulated backend
    latent: Optional[dict[str, float]] = None
    noise_mode: str = "noiseless"  # "noiseless" | "bradley_terry"
    seed: int = 0
    transport: Optional[Callable] = None

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.backend not in ("remote", "simulated"):
            raise ValidationError(f"unknown judge backend '{self.backend}'")


@dataclass(frozen=True)
class JudgeResult:
    verdict: Verdict
    usage: TokenUsage
    attempts: int


def render_prompts(a: Proposal, b: Proposal) -> tuple[str, str]:
    """Render the system and user prompt for a pair, A in the first slot."""
    for prop in (a, b):
        if not prop.text.strip():
            raise ValidationError(f"proposal '{prop.proposal_id}' has empty text")
    user = USER_PROMPT_TEMPLATE.replace("{proposal_text_a}", a.text).replace(
        "{proposal_text_b}", b.text
    )
    return SYSTEM_PROMPT, user


def _first_json_object(text: str, raw: str) -> dict:
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        return obj
    raise VerdictParseError("no JSON object found in judge reply", raw)


def parse_verdict(raw_reply: str) -> Verdict:
    """Parse a judge reply into a Verdict.

    Tolerates markdown code fences and surrounding prose; requires all four
    keys and a winner of exactly "A", "B", or "Tie".
    """
    fence = re.search(r"```(?:json)?\s*(.*?)```", raw_reply, re.DOTALL)
    candidate = fence.group(1) if fence else raw_reply
    obj = _first_json_object(candidate, raw_reply)
    if not isinstance(obj, dict):
        raise VerdictParseError("judge reply JSON is not an object", raw_reply)
    missing = [k for k in _REQUIRED_KEYS if k not in obj]
    if missing:
        raise VerdictParseError(f"judge reply missing keys: {missing}", raw_reply)
    for key in ("summary", "comparison", "reasoning"):
        if not isinstance(obj[key], str):
            raise VerdictParseError(f"judge reply field '{key}' is not a string", raw_reply)
    winner = obj["winner"]
    try:
        outcome = Outcome(winner)
    except ValueError:
        raise VerdictParseError(f"invalid winner value: {winner!r}", raw_reply) from None
    return Verdict(outcome, obj["summary"], obj["comparison"], obj["reasoning"])


def _hash_uniform(*parts) -> float:
    """Deterministic uniform draw in [0, 1) from arbitrary key parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def derived_latent(seed: int, proposal_id: str) -> float:
    """Deterministic per-proposal latent strength, log-uniform in [1, 10)."""
    return 10.0 ** _hash_uniform("latent", seed, proposal_id)


def default_latents(proposal_ids, seed: int) -> dict[str, float]:
    return {pid: derived_latent(seed, pid) for pid in proposal_ids}


def simulate_judge(
    latent: dict[str, float],
    noise_mode: str,
    seed: int,
    a: Proposal,
    b: Proposal,
) -> Verdict:
    """Deterministic simulated verdict for a pair.

    noiseless: the stronger latent wins, exact equality is a tie.
    bradley_terry: slot A wins with probability s_a/(s_a+s_b); the draw is a
    deterministic function of (seed, pair) computed on the canonical id order,
    so swapping the slots mirrors the outcome exactly.
    """
    id_a, id_b = a.proposal_id, b.proposal_id
    try:
        s_a, s_b = latent[id_a], latent[id_b]
    except KeyError as exc:
        raise ValidationError(f"no latent strength for proposal {exc}") from None
    if noise_mode == "noiseless":
        if s_a > s_b:
            outcome = Outcome.WIN_A
        elif s_b > s_a:
            outcome = Outcome.WIN_B
        else:
            outcome = Outcome.TIE
    elif noise_mode == "bradley_terry":
        if s_a <= 0 or s_b <= 0:
            raise ValidationError("latent strengths must be positive in bradley_terry mode")
        lo, hi = sorted((id_a, id_b))
        u = _hash_uniform("draw", seed, lo, hi)
        lo_wins = u < latent[lo] / (latent[lo] + latent[hi])
        winner_id = lo if lo_wins else hi
        outcome = Outcome.WIN_A if winner_id == id_a else Outcome.WIN_B
    else:
        raise ValidationError(f"unknown noise_mode '{noise_mode}'")
    return Verdict(
        outcome=outcome,
        summary=f"Simulated judgment for pair ({id_a}, {id_b}).",
        comparison=f"Latent strengths {s_a:.6g} vs {s_b:.6g}.",
        reasoning=f"Deterministic {noise_mode} draw, seed {seed}.",
    )


def _mirror(outcome: Outcome) -> Outcome:
    if outcome is Outcome.WIN_A:
        return Outcome.WIN_B
    if outcome is Outcome.WIN_B:
        return Outcome.WIN_A
    return Outcome.TIE


def _merge_two_pass(forward: Verdict, mirrored_back: Verdict) -> Verdict:
    if forward.outcome is mirrored_back.outcome:
        return forward
    return Verdict(
        outcome=Outcome.TIE,
        summary=forward.summary,
        comparison=forward.comparison,
        reasoning=(
            "Order-swapped passes disagreed "
            f"({forward.outcome.value} vs {mirrored_back.outcome.value}); resolved as Tie."
        ),
    )


def _simulated_usage(system: str, user: str, id_a: str, id_b: str) -> TokenUsage:
    output = 256 + int(_hash_uniform("tokens", id_a, id_b) * 64)
    return TokenUsage((len(system) + len(user)) // 4, output)


def _judge_simulated(config: JudgeConfig, a: Proposal, b: Proposal) -> JudgeResult:
    latent = config.latent
    if latent is None or a.proposal_id not in latent or b.proposal_id not in latent:
        latent = dict(latent or {})
        for pid in (a.proposal_id, b.proposal_id):
            latent.setdefault(pid, derived_latent(config.seed, pid))
    verdict = simulate_judge(latent, config.noise_mode, config.seed, a, b)
    if config.two_pass:
        mirrored = simulate_judge(latent, config.noise_mode, config.seed, b, a)
        back = Verdict(_mirror(mirrored.outcome), mirrored.summary, mirrored.comparison, mirrored.reasoning)
        verdict = _merge_two_pass(verdict, back)
    system, user = render_prompts(a, b)
    return JudgeResult(verdict, _simulated_usage(system, user, a.proposal_id, b.proposal_id), 1)


def _http_chat_transport(config: JudgeConfig, messages: list[dict]) -> tuple[str, TokenUsage]:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {"model": config.model_id, "messages": messages, "temperature": config.temperature}
    try:
        resp = requests.post(config.api_base, json=body, headers=headers, timeout=config.timeout)
    except requests.RequestException as exc:
        raise TransportError(f"chat request failed: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(
            f"chat backend returned HTTP {resp.status_code}: {resp.text[:200]}",
            status=resp.status_code,
        )
    try:
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat response: {exc}") from exc
    usage_raw = payload.get("usage") or {}
    usage = TokenUsage(
        int(usage_raw.get("prompt_tokens", 0)),
        int(usage_raw.get("completion_tokens", 0)),
    )
    return text, usage


def _remote_single_pass(config: JudgeConfig, a: Proposal, b: Proposal) -> JudgeResult:
    system, user = render_prompts(a, b)
    messages = [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]
    transport = config.transport or _http_chat_transport
    delay = config.initial_backoff
    last_error: Optional[Exception] = None
    total_attempts = config.max_retries + 1
    for attempt in range(1, total_attempts + 1):
        try:
            text, usage = transport(config, messages)
            return JudgeResult(parse_verdict(text), usage, attempt)
        except (TransportError, VerdictParseError) as exc:
            last_error = exc
            logger.warning(
                "judge attempt %d/%d failed for (%s, %s): %s",
                attempt,
                total_attempts,
                a.proposal_id,
                b.proposal_id,
                exc,
            )
            if attempt < total_attempts and delay > 0:
                time.sleep(delay)
                delay *= config.backoff_factor
    raise JudgeUnavailableError(
        f"judge unavailable for pair ({a.proposal_id}, {b.proposal_id}) "
        f"after {total_attempts} attempts: {last_error}"
    )


def _judge_remote(config: JudgeConfig, a: Proposal, b: Proposal) -> JudgeResult:
    forward = _remote_single_pass(config, a, b)
    if not config.two_pass:
        return forward
    reverse = _remote_single_pass(config, b, a)
    back = Verdict(
        _mirror(reverse.verdict.outcome),
        reverse.verdict.summary,
        reverse.verdict.comparison,
        reverse.verdict.reasoning,
    )
    return JudgeResult(
        _merge_two_pass(forward.verdict, back),
        forward.usage + reverse.usage,
        forward.attempts + reverse.attempts,
    )


def judge_pair(config: JudgeConfig, a: Proposal, b: Proposal) -> JudgeResult:
    """Obtain a verdict plus token usage for one ordered pair of proposals."""
    if config.backend == "simulated":
        return _judge_simulated(config, a, b)
    return _judge_remote(config, a, b)
