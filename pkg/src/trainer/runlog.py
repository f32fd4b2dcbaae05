"""
Append-only record of a training run, written as JSON lines.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from src.utils.json_utils import dumps


@dataclass
class RunLog:
    """
    Per-step losses, periodic validation metrics and final test metrics.

    `wall_clock_seconds` stays in memory; serialized logs hold only values that
    a rerun with the same seed reproduces.
    """

    header: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    steps: List[Dict[str, Any]] = field(default_factory=list)
    evals: List[Dict[str, Any]] = field(default_factory=list)
    final: Dict[str, Any] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def log_step(self, epoch: int, step: int, loss: float) -> None:
        self.steps.append({"epoch": epoch, "step": step, "loss": loss})

    def log_eval(self, epoch: int, split: str, metrics: Dict[str, Any]) -> None:
        self.evals.append({"epoch": epoch, "split": split, **metrics})

    @property
    def losses(self) -> List[float]:
        return [s["loss"] for s in self.steps]

    def best_eval(self, key: str = "masked_iou") -> Optional[Dict[str, Any]]:
        """First evaluation with the highest `key`."""
        best = None
        for record in self.evals:
            if best is None or record[key] > best[key]:
                best = record
        return best

    def records(self) -> Iterator[Dict[str, Any]]:
        yield {"type": "header", **self.header}
        yield {"type": "config", "config": self.config}
        for step in self.steps:
            yield {"type": "step", **step}
        for record in self.evals:
            yield {"type": "eval", **record}
        if self.final:
            yield {"type": "final", **self.final}

    def to_jsonl(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for record in self.records():
                f.write(dumps(record) + "\n")
        return path
