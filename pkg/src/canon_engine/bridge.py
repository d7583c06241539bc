"""HTTP client for the remote scoring protocol, and the protocol itself.

Wire format: HTTP/1.1 with JSON bodies. Endpoints:

    GET  /v1/health         -> {models: [...], preprocessing: {...}}
    GET  /v1/schedule       -> {betas: [...]}
    POST /v1/logits         {image_png_b64, prompts[]} -> {logits[]}
    POST /v1/denoise_error  {image_png_b64, timestep, seed} -> {mse}

Errors come back as JSON {error, detail} with a matching status code; the
error field "range" marks out-of-schedule timesteps. Images travel as
base64-encoded 8-bit PNG. Floats are plain JSON doubles serialized at full
precision (repr round-trip), so identical inputs yield byte-identical
payloads across implementations.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Sequence

import jsonschema
import numpy as np
import requests

from .energy import EnergyBackend, Logits, NoiseSchedule
from .errors import ArgumentError, ProtocolError, RangeError, ServerError, Timeout
from .imgcore import Image, encode_png, resize_bilinear

_NUMBER_ARRAY = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMAS: dict[str, dict] = {
    "logits_request": {
        "type": "object",
        "required": ["image_png_b64", "prompts"],
        "properties": {
            "image_png_b64": {"type": "string", "minLength": 1},
            "prompts": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        },
        "additionalProperties": False,
    },
    "logits_response": {
        "type": "object",
        "required": ["logits"],
        "properties": {"logits": _NUMBER_ARRAY},
    },
    "denoise_request": {
        "type": "object",
        "required": ["image_png_b64", "timestep", "seed"],
        "properties": {
            "image_png_b64": {"type": "string", "minLength": 1},
            "timestep": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer", "minimum": 0},
        },
        "additionalProperties": False,
    },
    "denoise_response": {
        "type": "object",
        "required": ["mse"],
        "properties": {"mse": {"type": "number"}},
    },
    "health_response": {
        "type": "object",
        "required": ["models"],
        "properties": {
            "models": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "preprocessing": {"type": "object"},
        },
    },
    "schedule_response": {
        "type": "object",
        "required": ["betas"],
        "properties": {"betas": _NUMBER_ARRAY},
    },
    "error_response": {
        "type": "object",
        "required": ["error", "detail"],
        "properties": {"error": {"type": "string"}, "detail": {"type": "string"}},
    },
}


@dataclass(frozen=True)
class RemoteBackendConfig:
    base_url: str
    timeout_ms: int = 10000
    retries: int = 0
    request_image_size: tuple[int, int] = (224, 224)

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ArgumentError("base_url must be non-empty")
        if self.timeout_ms <= 0:
            raise ArgumentError(f"timeout_ms must be > 0, got {self.timeout_ms}")
        if self.retries < 0:
            raise ArgumentError(f"retries must be >= 0, got {self.retries}")
        h, w = self.request_image_size
        if h < 1 or w < 1:
            raise ArgumentError(f"request_image_size must be positive, got {self.request_image_size}")
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))
        object.__setattr__(self, "request_image_size", (int(h), int(w)))


def encode_image_b64(image: Image) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def _validate(payload: dict, schema_name: str, context: str) -> dict:
    try:
        jsonschema.validate(payload, SCHEMAS[schema_name])
    except jsonschema.ValidationError as exc:
        raise ProtocolError(f"{context}: reply violates {schema_name}: {exc.message}") from exc
    return payload


class RemoteBackend(EnergyBackend):
    """EnergyBackend implemented by a model server over the wire protocol."""

    def __init__(self, cfg: RemoteBackendConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()
        self.descriptor = f"remote:{cfg.base_url}"

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = f"{self.cfg.base_url}{path}"
        timeout_s = self.cfg.timeout_ms / 1000.0
        attempts = self.cfg.retries + 1
        last: Exception | None = None
        for _ in range(attempts):
            try:
                if method == "GET":
                    resp = self.session.get(url, timeout=timeout_s)
                else:
                    resp = self.session.post(url, json=body, timeout=timeout_s)
                break
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = exc
        else:
            raise Timeout(
                f"{url} unreachable after {attempts} attempt(s) of {self.cfg.timeout_ms} ms: {last}"
            )
        return self._decode(resp, url)

    @staticmethod
    def _decode(resp: requests.Response, url: str) -> dict:
        try:
            payload = resp.json()
        except (ValueError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"{url}: non-JSON reply (status {resp.status_code})") from exc
        if resp.status_code >= 500:
            detail = payload.get("detail", "") if isinstance(payload, dict) else ""
            raise ServerError(f"{url}: server error {resp.status_code}: {detail}")
        if resp.status_code >= 400:
            if isinstance(payload, dict) and payload.get("error") == "range":
                raise RangeError(f"{url}: {payload.get('detail', 'value out of range')}")
            detail = payload.get("detail", payload) if isinstance(payload, dict) else payload
            raise ProtocolError(f"{url}: rejected ({resp.status_code}): {detail}")
        if not isinstance(payload, dict):
            raise ProtocolError(f"{url}: expected a JSON object, got {type(payload).__name__}")
        return payload

    # -- protocol ----------------------------------------------------------

    def logits(self, image: Image, prompts: Sequence[str]) -> Logits:
        if not prompts:
            raise ArgumentError("prompts must be non-empty")
        h, w = self.cfg.request_image_size
        body = {
            "image_png_b64": encode_image_b64(resize_bilinear(image, h, w)),
            "prompts": list(prompts),
        }
        _validate(body, "logits_request", "logits request")
        payload = self._validate_reply(self._request("POST", "/v1/logits", body), "logits_response")
        values = payload["logits"]
        if len(values) != len(prompts):
            raise ProtocolError(
                f"/v1/logits returned {len(values)} logits for {len(prompts)} prompts"
            )
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ProtocolError("/v1/logits returned non-finite values")
        return Logits(arr)

    def denoise_error(self, image: Image, timestep: int, noise_seed: int) -> float:
        if timestep < 1:
            raise RangeError(f"timestep {timestep} invalid: schedule is 1-indexed")
        body = {
            "image_png_b64": encode_image_b64(image),
            "timestep": int(timestep),
            "seed": int(noise_seed),
        }
        _validate(body, "denoise_request", "denoise request")
        payload = self._validate_reply(
            self._request("POST", "/v1/denoise_error", body), "denoise_response"
        )
        mse = float(payload["mse"])
        if not np.isfinite(mse):
            raise ProtocolError("/v1/denoise_error returned a non-finite mse")
        return mse

    def _validate_reply(self, payload: dict, schema_name: str) -> dict:
        return _validate(payload, schema_name, self.cfg.base_url)

    def health(self) -> dict:
        return self._validate_reply(self._request("GET", "/v1/health"), "health_response")

    def schedule(self) -> NoiseSchedule:
        payload = self._validate_reply(self._request("GET", "/v1/schedule"), "schedule_response")
        return NoiseSchedule(betas=np.asarray(payload["betas"], dtype=np.float64))


def remote_logits(image: Image, prompts: Sequence[str], cfg: RemoteBackendConfig) -> Logits:
    return RemoteBackend(cfg).logits(image, prompts)


def remote_denoise_error(image: Image, timestep: int, seed: int, cfg: RemoteBackendConfig) -> float:
    return RemoteBackend(cfg).denoise_error(image, timestep, seed)


def health_and_schedule(cfg: RemoteBackendConfig) -> tuple[dict, NoiseSchedule]:
    """Model descriptors plus the server's noise schedule, so client-side
    cumulative-signal computations agree with the server's."""
    backend = RemoteBackend(cfg)
    return backend.health(), backend.schedule()


def golden_requests() -> list[tuple[str, str, dict | None, str]]:
    """Canned protocol exchanges: (method, path, request body, response schema).

    Any conforming server must answer each of these with a payload that
    validates against the named response schema; used by server test suites.
    """
    rng = np.random.default_rng(20240811)
    flat = Image(rng.random((16, 16, 3)))
    grad = Image(np.repeat(np.linspace(0.9, 0.1, 16)[:, None, None], 16, 1).repeat(3, 2))
    return [
        ("GET", "/v1/health", None, "health_response"),
        ("GET", "/v1/schedule", None, "schedule_response"),
        (
            "POST",
            "/v1/logits",
            {"image_png_b64": encode_image_b64(flat), "prompts": ["a photo", "an object", "noise"]},
            "logits_response",
        ),
        (
            "POST",
            "/v1/logits",
            {"image_png_b64": encode_image_b64(grad), "prompts": ["a landscape"]},
            "logits_response",
        ),
        (
            "POST",
            "/v1/denoise_error",
            {"image_png_b64": encode_image_b64(grad), "timestep": 50, "seed": 12345},
            "denoise_response",
        ),
        (
            "POST",
            "/v1/denoise_error",
            {"image_png_b64": encode_image_b64(flat), "timestep": 999, "seed": 7},
            "denoise_response",
        ),
    ]
