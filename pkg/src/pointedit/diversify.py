"""Instruction diversification: an LLM rewrite client with an offline fallback.

The client asks a chat-completion endpoint to rewrite up to 40 edit
instructions per call into 3 meaning-preserving variants each, returned as a
JSON dict keyed by the input index. Anything that fails to parse is retried
once and then handed to the deterministic rule-based paraphraser, so a batch
never yields fewer than 3 variants per instruction.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re

import httpx
import numpy as np

log = logging.getLogger(__name__)

BATCH_LIMIT = 40
ENDPOINT_ENV = "P2P_LLM_ENDPOINT"
KEY_ENV = "P2P_LLM_KEY"

_REWRITE_PROMPT = (
    "You will be given a numbered list of 3D shape edit instructions. "
    "Rewrite each instruction into 3 different shape edit instructions without "
    "altering the meaning. Respond with a single JSON dict whose keys are the "
    "input indices (as strings) and whose values are lists of the 3 rewritten "
    "instructions.\n\n{payload}"
)

# frames applied when the instruction parses as "make the <object> <description>"
_TEMPLATE_FRAMES = [
    "change the {obj} to be {desc}",
    "i want the {obj} to be {desc}",
    "turn the {obj} {desc}",
    "the {obj} should be {desc}",
    "please make the {obj} {desc}",
]

# frames for instructions that do not match the template
_GENERIC_FRAMES = [
    "please {instr}",
    "i would like you to {instr}",
    "{instr}, please",
    "could you {instr}",
]

# descriptors recognized as the trailing <description> of the template,
# longest match first so multi-word colors split correctly
_KNOWN_DESCRIPTORS = [
    "more rectangular", "more reclined", "more upright", "more square",
    "sky blue", "navy blue",
    "longer", "shorter", "taller", "lower", "wider", "narrower", "deeper",
    "shallower", "thicker", "thinner", "rounder", "higher", "bigger", "smaller",
    "solid", "slatted", "one-legged",
    "blue", "red", "green", "yellow", "orange", "purple", "pink", "brown",
    "black", "white", "gray", "golden", "silver", "beige", "teal", "maroon",
    "olive", "cyan",
]

_TEMPLATE_RE = re.compile(r"^make the (.+)$", re.IGNORECASE)


class DiversifyError(ValueError):
    """Batch protocol violation."""


def _stable_seed(text: str, seed: int) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return (int.from_bytes(digest, "little") ^ seed) % (2 ** 63)


def _split_template(instruction: str) -> tuple[str, str] | None:
    m = _TEMPLATE_RE.match(instruction.strip())
    if not m:
        return None
    rest = m.group(1).strip()
    lowered = rest.lower()
    for desc in _KNOWN_DESCRIPTORS:
        if lowered.endswith(" " + desc):
            return rest[: len(rest) - len(desc)].strip(), rest[len(rest) - len(desc):]
    words = rest.rsplit(None, 1)
    if len(words) == 2:
        return words[0], words[1]
    return None


def offline_paraphrase(instruction: str, seed: int = 0) -> list[str]:
    """Three distinct deterministic rewrites of one edit instruction."""
    rng = np.random.default_rng(_stable_seed(instruction, seed))
    split = _split_template(instruction)
    if split is not None:
        obj, desc = split
        frames = [f.format(obj=obj, desc=desc) for f in _TEMPLATE_FRAMES]
    else:
        frames = [f.format(instr=instruction.strip()) for f in _GENERIC_FRAMES]
    picks = rng.choice(len(frames), size=3, replace=False)
    return [frames[i] for i in sorted(picks)]


class DiversifierClient:
    """Generic chat-completion HTTP client for instruction rewriting.

    Configured by endpoint URL and bearer key (env vars by default). A custom
    httpx transport can be injected for hermetic tests.
    """

    def __init__(self, endpoint: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self.api_key = api_key or os.environ.get(KEY_ENV, "")
        self.model = model or os.environ.get("P2P_LLM_MODEL", "gpt-3.5-turbo")
        self.timeout = timeout
        self._transport = transport

    def available(self) -> bool:
        return bool(self.endpoint)

    def _call(self, batch: list[str]) -> dict[int, list[str]]:
        payload = "\n".join(f"{i}: {text}" for i, text in enumerate(batch))
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": _REWRITE_PROMPT.format(payload=payload)}],
            "temperature": 0.7,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
            resp = client.post(self.endpoint, json=body, headers=headers)
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        raw = json.loads(content)
        out: dict[int, list[str]] = {}
        for key, variants in raw.items():
            idx = int(key)
            if not isinstance(variants, list) or len(variants) != 3:
                continue
            if not all(isinstance(v, str) and v.strip() for v in variants):
                continue
            out[idx] = [v.strip() for v in variants]
        return out

    def rewrite_batch(self, batch: list[str]) -> dict[int, list[str]]:
        """Rewrites with one retry for missing/malformed entries, then fallback."""
        if len(batch) > BATCH_LIMIT:
            raise DiversifyError(f"batch limit {BATCH_LIMIT} exceeded: {len(batch)}")
        if not batch:
            return {}
        results: dict[int, list[str]] = {}
        pending = list(range(len(batch)))
        for attempt in range(2):
            if not pending or not self.available():
                break
            try:
                got = self._call([batch[i] for i in pending])
            except (httpx.HTTPError, json.JSONDecodeError, KeyError, ValueError) as exc:
                log.warning("diversifier call failed (attempt %d): %s", attempt + 1, exc)
                continue
            still = []
            for local, original in enumerate(pending):
                if local in got:
                    results[original] = got[local]
                else:
                    still.append(original)
            pending = still
        for i in pending:
            results[i] = offline_paraphrase(batch[i])
        return results


def diversify_instructions(batch: list[str], client: DiversifierClient | None) -> dict[int, list[str]]:
    """Map each instruction index to exactly 3 rewrites; offline when no client."""
    if len(batch) > BATCH_LIMIT:
        raise DiversifyError(f"batch limit {BATCH_LIMIT} exceeded: {len(batch)}")
    if client is None or not client.available():
        return {i: offline_paraphrase(text) for i, text in enumerate(batch)}
    return client.rewrite_batch(batch)
