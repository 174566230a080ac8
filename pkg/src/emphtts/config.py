"""Run configuration: dimension presets, ablation flags, optimizer and
training settings, and the flat key=value config-file format. Every key can
be overridden from the command line as ``--set key=value``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Unknown key or unparsable value in a configuration source."""


@dataclass(frozen=True)
class RunConfig:
    preset: str = "toy"
    # frontends
    text_kind: str = "toy-hash"
    audio_kind: str = "toy-dsp"
    d_sentence_text: int = 16
    d_word_history: int = 16
    d_word_current: int = 16
    d_frame_audio: int = 16
    d_sentence_audio: int = 16
    d_speaker: int = 16
    window_ms: float = 25.0
    shift_ms: float = 10.0
    # context encoders
    gru_hidden: int = 16
    gru_layers: int = 1
    fine_heads: int = 2
    fine_d_qkv: int = 16
    # fusion and predictor
    d_fuse: int = 16
    fusion_heads: int = 2
    predictor_hidden: int = 64
    # synthesizer
    synth_d_model: int = 64
    synth_heads: int = 2
    synth_encoder_layers: int = 2
    synth_decoder_layers: int = 2
    n_mels: int = 80
    # run settings
    context_length: int = 10
    lambda_emp: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    batch_size: int = 16
    steps: int = 200
    seed: int = 0
    # ablation flags
    use_coarse_text: bool = True
    use_fine_text: bool = True
    use_coarse_audio: bool = True
    use_fine_audio: bool = True
    bidirectional: bool = True
    memory_carry: bool = True
    hybrid_attention: bool = True
    cross_attention: bool = True
    binary_labels: bool = False
    train_tts: bool = True

    def __post_init__(self) -> None:
        if self.context_length < 1:
            raise ConfigError("context_length must be >= 1")
        if self.fine_d_qkv % self.fine_heads != 0:
            raise ConfigError(
                f"encoder.fine.d_qkv {self.fine_d_qkv} not divisible by heads {self.fine_heads}"
            )
        if self.d_fuse % self.fusion_heads != 0:
            raise ConfigError(
                f"d_fuse {self.d_fuse} not divisible by fusion heads {self.fusion_heads}"
            )
        if self.synth_d_model % self.synth_heads != 0:
            raise ConfigError("synth.d_model not divisible by synth.heads")

    @property
    def enabled_encoders(self) -> tuple[str, ...]:
        names = []
        if self.use_coarse_text:
            names.append("coarse_text")
        if self.use_fine_text:
            names.append("fine_text")
        if self.use_coarse_audio:
            names.append("coarse_audio")
        if self.use_fine_audio:
            names.append("fine_audio")
        return tuple(names)


FLAT_KEYS = {
    "preset": "preset",
    "frontend.text.kind": "text_kind",
    "frontend.audio.kind": "audio_kind",
    "d_sentence_text": "d_sentence_text",
    "d_word_history": "d_word_history",
    "d_word_current": "d_word_current",
    "d_frame_audio": "d_frame_audio",
    "d_sentence_audio": "d_sentence_audio",
    "d_speaker": "d_speaker",
    "frame.window_ms": "window_ms",
    "frame.shift_ms": "shift_ms",
    "encoder.gru.hidden": "gru_hidden",
    "encoder.gru.layers": "gru_layers",
    "encoder.fine.heads": "fine_heads",
    "encoder.fine.d_qkv": "fine_d_qkv",
    "d_fuse": "d_fuse",
    "fusion.heads": "fusion_heads",
    "predictor.hidden": "predictor_hidden",
    "synth.d_model": "synth_d_model",
    "synth.heads": "synth_heads",
    "synth.encoder_layers": "synth_encoder_layers",
    "synth.decoder_layers": "synth_decoder_layers",
    "synth.n_mels": "n_mels",
    "context_length": "context_length",
    "lambda_emp": "lambda_emp",
    "train.lr": "lr",
    "train.beta1": "beta1",
    "train.beta2": "beta2",
    "train.batch_size": "batch_size",
    "train.steps": "steps",
    "train.seed": "seed",
    "encoders.coarse_text": "use_coarse_text",
    "encoders.fine_text": "use_fine_text",
    "encoders.coarse_audio": "use_coarse_audio",
    "encoders.fine_audio": "use_fine_audio",
    "model.bidirectional": "bidirectional",
    "model.memory_carry": "memory_carry",
    "fusion.hybrid_attention": "hybrid_attention",
    "fusion.cross_attention": "cross_attention",
    "labels.binary": "binary_labels",
    "train.tts": "train_tts",
}

_ATTR_TO_KEY = {attr: key for key, attr in FLAT_KEYS.items()}

PAPER_OVERRIDES = {
    "preset": "paper",
    "d_sentence_text": 512,
    "d_word_history": 768,
    "d_word_current": 1024,
    "d_frame_audio": 768,
    "d_sentence_audio": 768,
    "d_speaker": 768,
    "gru_hidden": 128,
    "gru_layers": 2,
    "fine_heads": 3,
    "fine_d_qkv": 768,
    "d_fuse": 256,
    "fusion_heads": 2,
    "synth_d_model": 256,
}


def toy_config(**overrides) -> RunConfig:
    return RunConfig(**overrides)


def paper_config(**overrides) -> RunConfig:
    merged = dict(PAPER_OVERRIDES)
    merged.update(overrides)
    return RunConfig(**merged)


def config_for_preset(preset: str, **overrides) -> RunConfig:
    if preset == "toy":
        return toy_config(**overrides)
    if preset == "paper":
        return paper_config(**overrides)
    raise ConfigError(f"unknown preset {preset!r}; choose 'toy' or 'paper'")


def _coerce(attr: str, raw: str):
    field_types = {f.name: f.type for f in fields(RunConfig)}
    ftype = field_types[attr]
    raw = raw.strip()
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {raw!r} for {attr}")
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def parse_flat_items(items: dict[str, str]) -> dict[str, object]:
    """Map flat config keys to RunConfig attribute/value pairs."""
    out: dict[str, object] = {}
    for key, raw in items.items():
        if key not in FLAT_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        attr = FLAT_KEYS[key]
        out[attr] = _coerce(attr, raw)
    return out


def load_config(path: str | Path) -> RunConfig:
    """Read a flat key=value config file; the preset key applies first so
    explicit keys can override its defaults."""
    items: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        items[key.strip()] = raw
    preset = items.pop("preset", "toy").strip()
    return config_for_preset(preset, **parse_flat_items(items))


def apply_overrides(config: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply command-line ``key=value`` overrides to a config."""
    items: dict[str, str] = {}
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override must be key=value, got {assignment!r}")
        key, raw = assignment.split("=", 1)
        items[key.strip()] = raw
    preset = items.pop("preset", None)
    if preset is not None:
        config = config_for_preset(preset.strip())
    return replace(config, **parse_flat_items(items))


def dump_config(config: RunConfig) -> str:
    lines = []
    for key in FLAT_KEYS:
        value = getattr(config, FLAT_KEYS[key])
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_to_dict(config: RunConfig) -> dict[str, object]:
    return {f.name: getattr(config, f.name) for f in fields(RunConfig)}


def config_from_dict(d: dict[str, object]) -> RunConfig:
    return RunConfig(**d)
