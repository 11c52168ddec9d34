"""Run configuration: TOML loading, flag overrides and snapshots.

A run is described by one TOML file with [data], [graph], [encoder],
[augment], [flow], [inner] and [loop] tables.  Command-line overrides use
dotted paths (e.g. ``flow.dt=0.05``) and win over the file.  A snapshot of
the effective configuration is written next to the run outputs so the run
can be reproduced bit-identically.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields

__all__ = [
    "ModalitySpec",
    "EncoderConfig",
    "AugmentConfig",
    "FlowConfig",
    "InnerConfig",
    "LoopConfig",
    "RunConfig",
    "load_config",
    "parse_override",
    "apply_overrides",
    "config_to_toml",
    "save_snapshot",
]


@dataclass
class ModalitySpec:
    path: str
    kind: str = "imaging"  # imaging | phenotypic
    name: str = ""
    categorical: bool = False

    def __post_init__(self):
        if self.kind not in ("imaging", "phenotypic"):
            raise ValueError(f"unknown modality kind {self.kind!r}")
        if not self.name:
            self.name = self.path


@dataclass
class EncoderConfig:
    enabled: bool = False
    dim_out: int = 16
    temperature: float = 0.5
    step_size: float = 0.05
    steps: int = 200


@dataclass
class AugmentConfig:
    feature_noise_sigma: float = 0.1
    feature_mask_prob: float = 0.1
    node_drop_prob: float = 0.1
    edge_perturb_ratio: float = 0.1


@dataclass
class InnerConfig:
    max_iters: int = 6000
    gap_tol: float = 1e-13


@dataclass
class FlowConfig:
    dt: float = 0.1
    max_outer_iters: int = 500
    ratio_tol: float = 1e-6
    norm: str = "weighted_l1"
    init_smoothing: float = 1.0
    restarts: int = 0


@dataclass
class LoopConfig:
    epochs: int = 5
    promote_threshold: float = 0.7
    learning_rate: float = 5e-2
    weight_decay: float = 2e-4
    classifier_epochs: int = 180


@dataclass
class RunConfig:
    modalities: list = field(default_factory=list)  # of ModalitySpec
    labels: str = ""
    truth: str = ""  # optional ground-truth CSV for metrics
    output_dir: str = "out"
    k: int = 10
    seed: int | None = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    inner: InnerConfig = field(default_factory=InnerConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


_SECTIONS = {
    "encoder": EncoderConfig,
    "augment": AugmentConfig,
    "flow": FlowConfig,
    "inner": InnerConfig,
    "loop": LoopConfig,
}


def _build_section(cls, table: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ValueError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    return cls(**table)


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    data = doc.pop("data", {})
    graph = doc.pop("graph", {})
    cfg = RunConfig(
        labels=data.get("labels", ""),
        truth=data.get("truth", ""),
        output_dir=data.get("output_dir", "out"),
        k=graph.get("k", 10),
        seed=doc.pop("seed", None),
    )
    cfg.modalities = [
        ModalitySpec(**entry) for entry in data.get("modalities", [])
    ]
    for key, cls in _SECTIONS.items():
        if key in doc:
            setattr(cfg, key, _build_section(cls, doc.pop(key), key))
    if doc:
        raise ValueError(f"unknown config table(s): {sorted(doc)}")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))


def parse_override(text: str):
    """Split 'dotted.key=value' and coerce the value from its TOML literal."""
    if "=" not in text:
        raise ValueError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare string
    return key.strip(), value


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply dotted-path overrides in order; later entries win."""
    for text in overrides:
        key, value = parse_override(text)
        parts = key.split(".")
        target = cfg
        # top-level aliases matching the TOML layout
        alias = {"data.labels": "labels", "data.truth": "truth",
                 "data.output_dir": "output_dir", "graph.k": "k"}
        if key in alias:
            parts = [alias[key]]
        obj = target
        for p in parts[:-1]:
            if not hasattr(obj, p):
                raise ValueError(f"unknown config path {key!r}")
            obj = getattr(obj, p)
        leaf = parts[-1]
        if not hasattr(obj, leaf):
            raise ValueError(f"unknown config path {key!r}")
        current = getattr(obj, leaf)
        if current is not None and not isinstance(value, type(current)) \
                and not (isinstance(current, float) and isinstance(value, int)):
            raise ValueError(
                f"override {key!r}: expected {type(current).__name__}, "
                f"got {type(value).__name__}")
        setattr(obj, leaf, float(value) if isinstance(current, float) else value)
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def config_to_toml(cfg: RunConfig) -> str:
    """Serialise the effective configuration; round-trips via load_config."""
    lines = []
    if cfg.seed is not None:
        lines.append(f"seed = {cfg.seed}")
        lines.append("")
    lines.append("[data]")
    lines.append(f"labels = {_toml_value(cfg.labels)}")
    if cfg.truth:
        lines.append(f"truth = {_toml_value(cfg.truth)}")
    lines.append(f"output_dir = {_toml_value(cfg.output_dir)}")
    for spec in cfg.modalities:
        lines.append("")
        lines.append("[[data.modalities]]")
        for k, v in asdict(spec).items():
            lines.append(f"{k} = {_toml_value(v)}")
    lines.append("")
    lines.append("[graph]")
    lines.append(f"k = {cfg.k}")
    for key in _SECTIONS:
        lines.append("")
        lines.append(f"[{key}]")
        for k, v in asdict(getattr(cfg, key)).items():
            lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def save_snapshot(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(config_to_toml(cfg))
