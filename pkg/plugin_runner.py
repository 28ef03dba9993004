"""External metric plug-ins (FID, LPIPS and friends).

Protocol: the plug-in is invoked as ``<command> <gt_dir> <out_dir>`` and must
print one JSON object on standard output, either

  {"scalar": 30.69}                      set-level value
  {"per_image": {"img_001": 0.12, ...}}  one value per image id (file stem)

Anything else, a nonzero exit status, or a per-image id set that differs from
the staged images is reported as a PluginError carrying an output excerpt.
"""

import json
import math
import shlex
import subprocess
from typing import Iterable, Optional

from config import Config
from exceptions import PluginError
from models import PluginResult
from utils.logger_config import LOGGER


def _text(stream) -> str:
    if stream is None:
        return ""
    if isinstance(stream, bytes):
        return stream.decode("utf-8", errors="replace")
    return stream


def _excerpt(stdout, stderr, limit=Config.PLUGIN_EXCERPT_CHARS) -> str:
    parts = []
    for label, stream in (("stdout", stdout), ("stderr", stderr)):
        text = _text(stream).strip()
        if text:
            parts.append(f"[{label}] {text[-limit:]}")
    return "\n".join(parts)


def _parse_payload(name, stdout, stderr) -> dict:
    text = _text(stdout).strip()
    candidates = [text] + [line for line in reversed(text.splitlines()) if line.strip()]
    for candidate in candidates:
        try:
            payload = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict):
            return payload
    raise PluginError(name, "unparseable output (expected one JSON object on stdout)", _excerpt(stdout, stderr))


def _as_number(name, value, what, stdout, stderr) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise PluginError(name, f"{what} is not a number: {value!r}", _excerpt(stdout, stderr))
    return float(value)


def run_plugin_metric(name: str, command, gt_dir, out_dir, expected_ids: Optional[Iterable[str]] = None,
                      timeout: float = Config.PLUGIN_TIMEOUT) -> PluginResult:
    argv = shlex.split(command) if isinstance(command, str) else [str(c) for c in command]
    if not argv:
        raise PluginError(name, "empty command")
    argv += [str(gt_dir), str(out_dir)]
    LOGGER.info(f"Running plugin '{name}': {' '.join(argv)}")

    try:
        proc = subprocess.run(argv, capture_output=True, text=True, encoding="utf-8", errors="replace",
                              timeout=timeout, check=False)
    except FileNotFoundError:
        raise PluginError(name, f"command not found: {argv[0]}") from None
    except PermissionError:
        raise PluginError(name, f"command not executable: {argv[0]}") from None
    except subprocess.TimeoutExpired as e:
        raise PluginError(name, f"timed out after {timeout}s", _excerpt(e.stdout, e.stderr)) from None

    if proc.returncode != 0:
        raise PluginError(name, f"exit status {proc.returncode}", _excerpt(proc.stdout, proc.stderr))

    payload = _parse_payload(name, proc.stdout, proc.stderr)
    keys = set(payload)
    if keys == {"scalar"}:
        value = _as_number(name, payload["scalar"], "scalar", proc.stdout, proc.stderr)
        return PluginResult(name=name, scalar=value)

    if keys == {"per_image"} and isinstance(payload["per_image"], dict):
        values = {str(k): _as_number(name, v, f"value for '{k}'", proc.stdout, proc.stderr)
                  for k, v in payload["per_image"].items()}
        if expected_ids is not None:
            expected = set(expected_ids)
            missing, unexpected = sorted(expected - set(values)), sorted(set(values) - expected)
            if missing or unexpected:
                raise PluginError(name, f"id mismatch (missing {missing[:10]}, unexpected {unexpected[:10]})",
                                  _excerpt(proc.stdout, proc.stderr))
        return PluginResult(name=name, per_image=dict(sorted(values.items())))

    raise PluginError(name, f"expected exactly one of 'scalar' or 'per_image', got keys {sorted(keys)}",
                      _excerpt(proc.stdout, proc.stderr))
