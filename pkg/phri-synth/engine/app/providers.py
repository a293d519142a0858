"""
Scenario providers: a remote chat endpoint, fixture replay and a seeded
procedural sampler, all returning validated ``ScenarioSpec`` values.
"""

import base64
import json
import os
import re
import time
from pathlib import Path
from typing import Callable, Optional

import httpx
import openai
from openai import OpenAI
from pydantic import ValidationError

from .errors import AuthFailure, FixtureMiss, IOFailure, MalformedResponse, ProviderTimeout, ProviderUnreachable
from .logger import get_logger, log_exception
from .schemas import PART_LABELS, ProviderConfig, ScenarioSpec
from .seeding import SplitMix64, derive_seed, fnv1a64

logger = get_logger(__name__)

JSON_BLOCK = re.compile(r"```json[ \t]*\n(.*?)```", re.DOTALL)

SCENARIO_SYSTEM_PROMPT = """
You write scenarios for physical human-robot interaction in a home.
Given a task prompt, describe the person, the room and the task so that the
three descriptions agree with each other, then list the structured fields.

Answer with prose if you like, but end with exactly one fenced block:
```json
{
    "human_description": "string",
    "environment_description": "string",
    "task_description": "string",
    "posture": "sitting|standing|lying",
    "room_type": "string",
    "required_furniture": ["string"],
    "relevant_body_parts": ["label"]
}
```
Body part labels must come from: """ + ", ".join(PART_LABELS) + "\n"

POSTURE_WORDS = {
    "sitting": ("sitting", "seated", "sits", "sit "),
    "standing": ("standing", "stands", "stand "),
    "lying": ("lying", "lies down", "lying down", "in bed"),
}

# Phrases are matched longest first so "left forearm" wins over "forearm".
PART_PHRASES = {
    "left forearm": ("left_forearm",),
    "right forearm": ("right_forearm",),
    "left upper arm": ("left_upper_arm",),
    "right upper arm": ("right_upper_arm",),
    "left arm": ("left_upper_arm", "left_forearm"),
    "right arm": ("right_upper_arm", "right_forearm"),
    "left thigh": ("left_thigh",),
    "right thigh": ("right_thigh",),
    "left leg": ("left_thigh", "left_lower_leg"),
    "right leg": ("right_thigh", "right_lower_leg"),
    "left shin": ("left_lower_leg",),
    "right shin": ("right_lower_leg",),
    "forearm": ("left_forearm",),
    "upper arm": ("left_upper_arm",),
    "arm": ("left_upper_arm", "left_forearm"),
    "shin": ("left_lower_leg",),
    "calf": ("left_lower_leg",),
    "leg": ("left_thigh", "left_lower_leg"),
    "thigh": ("left_thigh",),
    "back": ("torso",),
    "chest": ("torso",),
    "shoulder": ("torso",),
    "face": ("head",),
    "head": ("head",),
    "scalp": ("head",),
    "hair": ("head",),
}

POSTURE_WEIGHTS = (("sitting", 0.8), ("standing", 0.2))
ROOM_WEIGHTS = {
    "sitting": (("living_room", 0.5), ("bedroom", 0.3), ("study", 0.2)),
    "standing": (("living_room", 0.4), ("bathroom", 0.4), ("kitchen", 0.2)),
    "lying": (("bedroom", 1.0),),
}
SUPPORT_WEIGHTS = {
    "sitting": (("chair", 0.6), ("couch", 0.3), ("stool", 0.1)),
    "standing": (),
    "lying": (("bed", 1.0),),
}
HUMAN_DESCRIPTIONS = (
    "an older adult of average build",
    "a tall adult with long limbs",
    "a short, slim adult",
    "a heavy-set adult with broad shoulders",
    "a middle-aged adult of average height",
)


def _weighted_choice(rng: SplitMix64, table) -> str:
    total = sum(weight for _, weight in table)
    draw = rng.next_float() * total
    for value, weight in table:
        draw -= weight
        if draw < 0:
            return value
    return table[-1][0]


def explicit_posture(prompt: str) -> Optional[str]:
    """Posture named outright in the prompt, if any."""
    text = f" {prompt.lower()} "
    for posture, words in POSTURE_WORDS.items():
        if any(word in text for word in words):
            return posture
    return None


def extract_body_parts(prompt: str) -> list[str]:
    text = prompt.lower()
    parts: list[str] = []
    for phrase in sorted(PART_PHRASES, key=len, reverse=True):
        pattern = rf"\b{re.escape(phrase)}s?\b"
        if re.search(pattern, text):
            for label in PART_PHRASES[phrase]:
                if label not in parts:
                    parts.append(label)
            text = re.sub(pattern, " ", text)
    return parts


# Structured payloads

def _byte_offset(raw: str, char_index: int) -> int:
    return len(raw[:char_index].encode("utf-8"))


def _locate_block(raw: str) -> tuple[str, int]:
    match = JSON_BLOCK.search(raw)
    if match:
        return match.group(1), match.start(1)
    stripped = raw.lstrip()
    if stripped.startswith("{"):
        return raw, 0
    raise MalformedResponse("response has no structured block", offset=_byte_offset(raw, len(raw)))


def parse_structured_response(raw: str) -> ScenarioSpec:
    """Extract the fenced JSON block from a provider payload and validate it."""
    block, start = _locate_block(raw)
    try:
        data = json.loads(block)
    except json.JSONDecodeError as e:
        raise MalformedResponse(f"invalid JSON: {e.msg}", offset=_byte_offset(raw, start + e.pos)) from e
    if not isinstance(data, dict):
        raise MalformedResponse("structured block is not an object", offset=_byte_offset(raw, start))
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = str(first["loc"][0]) if first["loc"] else ""
        position = block.find(f'"{field}"') if field else -1
        offset = _byte_offset(raw, start + max(position, 0))
        raise MalformedResponse(f"invalid field {field}: {first['msg']}", field=field, offset=offset) from e


def serialize_scenario(spec: ScenarioSpec) -> str:
    return json.dumps(spec.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


def load_scenario(path: str | Path) -> ScenarioSpec:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IOFailure(f"cannot read scenario: {e}", path=str(path)) from e
    return parse_structured_response(raw)


# Remote chat endpoint

def build_client(config: ProviderConfig, http_client: Optional[httpx.Client] = None) -> OpenAI:
    api_key = os.environ.get(config.api_key_env_var)
    if not api_key:
        raise AuthFailure(f"environment variable {config.api_key_env_var} is not set")
    # Retries are handled by http_chat_call so backoff follows the provider config.
    return OpenAI(
        api_key=api_key,
        base_url=config.endpoint_url,
        timeout=config.timeout,
        max_retries=0,
        http_client=http_client,
    )


def _user_content(user_prompt: str, image_png: Optional[bytes]):
    if image_png is None:
        return user_prompt
    encoded = base64.b64encode(image_png).decode("utf-8")
    return [
        {"type": "text", "text": user_prompt},
        {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{encoded}"}},
    ]


def http_chat_call(
    config: ProviderConfig,
    system_prompt: str,
    user_prompt: str,
    image_png: Optional[bytes] = None,
    *,
    http_client: Optional[httpx.Client] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """
    Issue one chat-completion request, retrying transport failures and 5xx
    responses with exponential backoff. Authentication failures are not retried.
    """
    client = build_client(config, http_client)
    messages = [
        {"role": "system", "content": system_prompt},
        {"role": "user", "content": _user_content(user_prompt, image_png)},
    ]
    last_error: Exception = ProviderUnreachable("no request issued")
    for attempt in range(config.max_retries + 1):
        try:
            response = client.chat.completions.create(model=config.model_name, messages=messages)
            return response.choices[0].message.content or ""
        except (openai.AuthenticationError, openai.PermissionDeniedError) as e:
            raise AuthFailure(f"provider rejected credentials: {e.status_code}", status=e.status_code) from e
        except openai.APITimeoutError as e:
            last_error = ProviderTimeout(f"request timed out after {config.timeout}s", attempts=attempt + 1)
            last_error.__cause__ = e
        except openai.APIConnectionError as e:
            last_error = ProviderUnreachable(f"transport failure: {e}", attempts=attempt + 1)
            last_error.__cause__ = e
        except openai.APIStatusError as e:
            if e.status_code < 500:
                raise ProviderUnreachable(f"provider returned {e.status_code}", status=e.status_code) from e
            last_error = ProviderUnreachable(f"provider returned {e.status_code}", status=e.status_code, attempts=attempt + 1)
            last_error.__cause__ = e

        if attempt < config.max_retries:
            delay = config.backoff_base * config.backoff_factor**attempt
            logger.warning(f"Provider call failed ({last_error}); retrying in {delay:.1f}s")
            sleep(delay)

    log_exception(logger, last_error, "Provider call failed after retries")
    raise last_error


def request_structured(
    config: ProviderConfig,
    system_prompt: str,
    user_prompt: str,
    parse: Callable[[str], object],
    image_png: Optional[bytes] = None,
    **kwargs,
):
    """Call the endpoint and parse the answer, asking again while the answer is malformed."""
    last_error: Optional[MalformedResponse] = None
    for _ in range(config.max_retries + 1):
        raw = http_chat_call(config, system_prompt, user_prompt, image_png, **kwargs)
        try:
            return parse(raw)
        except MalformedResponse as e:
            logger.warning(f"Malformed provider response: {e}")
            last_error = e
    raise last_error


# Providers

def fixture_file(config: ProviderConfig, prompt: str) -> Path:
    return Path(config.fixture_path) / f"{fnv1a64(prompt):016x}.txt"


def fixture_scenario(prompt: str, config: ProviderConfig) -> ScenarioSpec:
    path = fixture_file(config, prompt)
    if not path.is_file():
        raise FixtureMiss(f"no fixture for prompt {prompt!r}", path=str(path))
    return parse_structured_response(path.read_text(encoding="utf-8"))


def procedural_scenario(prompt: str, seed: int) -> ScenarioSpec:
    """Sample a scenario from fixed weighted tables; a pure function of (prompt, seed)."""
    rng = SplitMix64(derive_seed(seed, prompt))
    posture = explicit_posture(prompt) or _weighted_choice(rng, POSTURE_WEIGHTS)
    room_type = _weighted_choice(rng, ROOM_WEIGHTS[posture])
    support = _weighted_choice(rng, SUPPORT_WEIGHTS[posture]) if SUPPORT_WEIGHTS[posture] else None
    human = HUMAN_DESCRIPTIONS[int(rng.next_float() * len(HUMAN_DESCRIPTIONS))]

    parts = extract_body_parts(prompt)
    if not parts:
        parts = [("left_forearm", "right_forearm", "torso")[int(rng.next_float() * 3)]]

    readable_room = room_type.replace("_", " ")
    environment = f"A {readable_room} with a {support} for the person." if support else f"An open {readable_room}."
    place = f"{posture} on a {support}" if support else posture
    return ScenarioSpec(
        human_description=f"{human.capitalize()}, {place}.",
        environment_description=environment,
        task_description=prompt.strip(),
        posture=posture,
        room_type=room_type,
        required_furniture=[support] if support else [],
        relevant_body_parts=parts,
        seed=seed,
    )


def http_scenario(prompt: str, config: ProviderConfig, seed: int, **kwargs) -> ScenarioSpec:
    expected = explicit_posture(prompt)

    def parse(raw: str) -> ScenarioSpec:
        spec = parse_structured_response(raw)
        if expected is not None and spec.posture != expected:
            raise MalformedResponse(
                f"posture {spec.posture} contradicts the prompt ({expected})", field="posture", offset=0
            )
        return spec

    spec = request_structured(config, SCENARIO_SYSTEM_PROMPT, prompt, parse, **kwargs)
    return spec.model_copy(update={"seed": seed})


def generate_scenario(prompt: str, config: ProviderConfig, seed: int = 0, **kwargs) -> ScenarioSpec:
    logger.info(f"Generating scenario with the {config.kind} provider")
    if config.kind == "fixture":
        return fixture_scenario(prompt, config)
    if config.kind == "http":
        return http_scenario(prompt, config, seed, **kwargs)
    return procedural_scenario(prompt, seed)
