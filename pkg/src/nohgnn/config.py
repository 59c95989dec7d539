"""Plain-text run configuration: ``key = value`` lines.

A run file carries the training hyperparameters plus dataset and output
paths. Blank lines and ``#`` comments are ignored; unknown keys are rejected
by name; missing keys take the defaults below. Command-line flags override
file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from nohgnn.errors import ParseError
from nohgnn.training import TrainConfig


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """One training/evaluation run: data source, output directory, and knobs.

    ``data`` names an ingested dataset artifact; ``edges`` plus ``slots``
    name a raw edge list to ingest on the fly. Exactly one source is needed
    for training.
    """

    edges: str | None = None
    data: str | None = None
    slots: int | None = None
    undirected: bool = True
    out: str = "."
    learning_rate: float = 0.01
    beta_reg: float = 0.001
    max_epochs: int = 300
    patience: int = 10
    k_hops: int = 2
    layers: int = 2
    dim: int = 32
    transform: str = "identity"
    seed: int = 0
    neg_ratio: int = 1
    threshold: float = 0.5

    def to_train_config(self) -> TrainConfig:
        names = [f.name for f in fields(TrainConfig)]
        return TrainConfig(**{name: getattr(self, name) for name in names})


_CONVERTERS = {
    "edges": str,
    "data": str,
    "slots": int,
    "undirected": _bool,
    "out": str,
    "learning_rate": float,
    "beta_reg": float,
    "max_epochs": int,
    "patience": int,
    "k_hops": int,
    "layers": int,
    "dim": int,
    "transform": str,
    "seed": int,
    "neg_ratio": int,
    "threshold": float,
}


def load_run_config(path: str) -> RunConfig:
    kwargs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONVERTERS:
                raise ParseError(f"{path}:{line_no}: unknown key {key!r}")
            if key in kwargs:
                raise ParseError(f"{path}:{line_no}: duplicate key {key!r}")
            try:
                kwargs[key] = _CONVERTERS[key](value)
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}") from None
    return RunConfig(**kwargs)


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    """A copy with every non-None override applied."""
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
