"""Adapter configuration: model handles, prompt sets, runtime knobs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

# Editable defaults; the per-category lists are expected to be replaced by
# dataset owners. The two class-specific examples are the conventional
# starting points for state-style expressions.
DEFAULT_CLASS_AGNOSTIC = ["anomaly", "defect"]
DEFAULT_CLASS_SPECIFIC = ["black hole", "white bubble"]
DEFAULT_OBJECT_PROMPT = "object"


@dataclass
class PromptSet:
    """Language prompts, with per-category overrides."""

    class_agnostic: list = field(default_factory=lambda: list(DEFAULT_CLASS_AGNOSTIC))
    class_specific: dict = field(default_factory=dict)  # category -> [phrases]
    object_prompts: dict = field(default_factory=dict)  # category -> phrase
    default_class_specific: list = field(
        default_factory=lambda: list(DEFAULT_CLASS_SPECIFIC)
    )
    default_object_prompt: str = DEFAULT_OBJECT_PROMPT

    def for_category(self, category: str) -> list:
        specific = self.class_specific.get(category, self.default_class_specific)
        prompts = list(self.class_agnostic) + list(specific)
        if not prompts:
            raise ValueError("prompt set resolves to an empty prompt list")
        return prompts

    def object_prompt(self, category: str) -> str:
        return self.object_prompts.get(category, self.default_object_prompt)

    @classmethod
    def from_json(cls, path) -> "PromptSet":
        data = json.loads(Path(path).read_text())
        return cls(
            class_agnostic=list(data.get("class_agnostic", DEFAULT_CLASS_AGNOSTIC)),
            class_specific=dict(data.get("class_specific", {})),
            object_prompts=dict(data.get("object_prompts", {})),
            default_class_specific=list(
                data.get("default_class_specific", DEFAULT_CLASS_SPECIFIC)
            ),
            default_object_prompt=data.get("default_object_prompt", DEFAULT_OBJECT_PROMPT),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps({
            "class_agnostic": self.class_agnostic,
            "class_specific": self.class_specific,
            "object_prompts": self.object_prompts,
            "default_class_specific": self.default_class_specific,
            "default_object_prompt": self.default_object_prompt,
        }, indent=2) + "\n")


@dataclass
class AdapterConfig:
    """Backends, checkpoints and export knobs for one extraction run."""

    detector_checkpoint: Optional[str] = None
    detector_config: Optional[str] = None
    segmenter_checkpoint: Optional[str] = None
    backbone_checkpoint: Optional[str] = None
    device: str = "cpu"
    batch_size: int = 1
    input_size: int = 400
    box_threshold: float = 0.05  # export liberally; the engine filters
    backbone_layer: str = "layer2"  # second residual stage, stride-8 map
    prompts: PromptSet = field(default_factory=PromptSet)

    def validate(self) -> None:
        for name in ("detector_checkpoint", "detector_config",
                     "segmenter_checkpoint", "backbone_checkpoint"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise FileNotFoundError(f"{name} does not exist: {value}")
        if self.input_size < 8:
            raise ValueError("input_size too small")
        if not (0.0 <= self.box_threshold <= 1.0):
            raise ValueError("box_threshold must be in [0, 1]")
