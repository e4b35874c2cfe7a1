"""
Run manifests written beside every command output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

from django.core.exceptions import ValidationError

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    """
    Everything needed to rerun a command: its options, the toolkit settings,
    the seed, digests of the inputs and the files it wrote.

    Nothing time- or host-dependent is recorded, so reruns produce the same
    manifest byte for byte.
    """

    command: str
    options: Dict[str, Any]
    config: Dict[str, Any]
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    tool_version: str = ""

    def __post_init__(self) -> None:
        if not self.command:
            raise ValidationError({"command": "a manifest names its command"})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": MANIFEST_FORMAT_VERSION,
            "command": self.command,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "options": self.options,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": list(self.outputs),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_bytes(self.dumps().encode("utf-8"))
        return path
