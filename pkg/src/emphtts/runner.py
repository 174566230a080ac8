"""Experiment driver: training with checkpoint/resume, chained dialogue
prediction, synthesis, evaluation, context-length sweeps, and the ablation
experiment table.

Training is deterministic for a fixed seed and thread count: the batch
sampler's RNG state and the torch RNG state are part of every checkpoint,
so resuming reproduces the exact step sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, config_from_dict, config_to_dict
from .corpus import Conversation, split_corpus
from .dataset import (
    DialogueExample,
    FeatureExtractor,
    build_examples,
    corpus_variance_stats,
    scan_phonemes,
    scan_speakers,
)
from .metrics import (
    EmphasisTestInstance,
    f1_m,
    mae,
    match_m,
    normalize_durations,
)
from .model import ConversationalTTSModel
from .synthesizer import reconstruct_waveform


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or unusable corpus)."""


@dataclass
class TrainedState:
    """A live checkpoint: model plus everything needed to resume or infer."""

    config: RunConfig
    model: ConversationalTTSModel
    optimizer: torch.optim.Adam
    step: int
    loss_history: list[float]
    speakers: tuple[str, ...]
    phonemes: tuple[str, ...]
    pitch_stats: tuple[float, float]
    energy_stats: tuple[float, float]
    batch_rng: np.random.Generator


def save_checkpoint(state: TrainedState, path: str | Path) -> None:
    payload = {
        "config": config_to_dict(state.config),
        "speakers": list(state.speakers),
        "phonemes": list(state.phonemes),
        "pitch_stats": list(state.pitch_stats),
        "energy_stats": list(state.energy_stats),
        "model_state": state.model.state_dict(),
        "optimizer_state": state.optimizer.state_dict(),
        "step": state.step,
        "loss_history": state.loss_history,
        "numpy_rng_state": state.batch_rng.bit_generator.state,
        "torch_rng_state": torch.get_rng_state(),
    }
    torch.save(payload, Path(path))


def load_checkpoint(path: str | Path) -> TrainedState:
    """Rebuild a TrainedState; restores the torch global RNG state so that
    continued training matches an uninterrupted run bit for bit."""
    payload = torch.load(Path(path), weights_only=False)
    config = config_from_dict(payload["config"])
    model = ConversationalTTSModel(
        config,
        tuple(payload["speakers"]),
        tuple(payload["phonemes"]),
        tuple(payload["pitch_stats"]),
        tuple(payload["energy_stats"]),
    )
    model.load_state_dict(payload["model_state"])
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2)
    )
    optimizer.load_state_dict(payload["optimizer_state"])
    batch_rng = np.random.default_rng()
    batch_rng.bit_generator.state = payload["numpy_rng_state"]
    torch.set_rng_state(payload["torch_rng_state"])
    return TrainedState(
        config=config,
        model=model,
        optimizer=optimizer,
        step=payload["step"],
        loss_history=list(payload["loss_history"]),
        speakers=tuple(payload["speakers"]),
        phonemes=tuple(payload["phonemes"]),
        pitch_stats=tuple(payload["pitch_stats"]),
        energy_stats=tuple(payload["energy_stats"]),
        batch_rng=batch_rng,
    )


def train(
    config: RunConfig,
    conversations: list[Conversation],
    corpus_root: str | Path | None = None,
    resume: TrainedState | None = None,
    checkpoint_path: str | Path | None = None,
    log_every: int = 50,
    verbose: bool = False,
) -> TrainedState:
    torch.set_num_threads(1)  # bit-for-bit reproducibility
    if resume is not None:
        # continue the checkpoint's configuration toward the new step target
        config = replace(resume.config, steps=config.steps)
        resume.config = config
    extractor = FeatureExtractor(config, corpus_root)
    examples = build_examples(conversations, extractor)
    if not examples:
        raise TrainingError("corpus has no trainable examples (need >= 2 turns)")

    if resume is None:
        torch.manual_seed(config.seed)
        speakers = scan_speakers(conversations)
        phonemes = scan_phonemes(conversations)
        pitch_stats, energy_stats = corpus_variance_stats(conversations, extractor)
        model = ConversationalTTSModel(config, speakers, phonemes, pitch_stats, energy_stats)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2)
        )
        state = TrainedState(
            config=config,
            model=model,
            optimizer=optimizer,
            step=0,
            loss_history=[],
            speakers=speakers,
            phonemes=phonemes,
            pitch_stats=pitch_stats,
            energy_stats=energy_stats,
            batch_rng=np.random.default_rng(config.seed),
        )
    else:
        state = resume

    model = state.model
    model.train()
    for step in range(state.step, config.steps):
        size = min(config.batch_size, len(examples))
        idx = state.batch_rng.choice(len(examples), size=size, replace=False)
        batch = [examples[i] for i in idx]
        batch_ids = [f"{ex.conversation_id}:turn{ex.turn_index}" for ex in batch]
        state.optimizer.zero_grad()
        try:
            totals = [model.forward_train(ex)["total"] for ex in batch]
        except ValueError as exc:
            # diverged activations surface as module input errors
            raise TrainingError(
                f"aborted at step {step} ({exc}); offending batch: {batch_ids}"
            ) from exc
        loss = torch.stack(totals).mean()
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at step {step}; offending batch: {batch_ids}"
            )
        loss.backward()
        state.optimizer.step()
        state.loss_history.append(float(loss.item()))
        state.step = step + 1
        if verbose and (step + 1) % log_every == 0:
            print(f"step {step + 1}/{config.steps} loss {loss.item():.4f}")

    model.eval()
    if checkpoint_path is not None:
        save_checkpoint(state, checkpoint_path)
    return state


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _turn_example(
    features: list, conversation_id: str, n: int, context_length: int
) -> DialogueExample:
    history = features[max(0, n - 1 - context_length) : n - 1]
    return DialogueExample(
        conversation_id=conversation_id,
        turn_index=n,
        history=list(history),
        current=features[n - 1],
    )


def predict_dialogue(
    state: TrainedState,
    conversation: Conversation,
    corpus_root: str | Path | None = None,
    gold_history: bool = False,
    extractor: FeatureExtractor | None = None,
) -> list[list[float]]:
    """Per-turn predicted intensities. Turn 1 runs in empty-history mode;
    later turns read predicted history intensities unless gold_history."""
    extractor = extractor or FeatureExtractor(state.config, corpus_root)
    model = state.model
    model.eval()
    features = [extractor.turn_features(conversation, u) for u in conversation.turns]
    context_length = state.config.context_length
    predictions: list[list[float]] = []
    predicted_tensors: list[torch.Tensor] = []
    with torch.no_grad():
        for n in range(1, len(conversation.turns) + 1):
            example = _turn_example(features, conversation.conversation_id, n, context_length)
            override = None
            if not gold_history and example.history:
                start = max(0, n - 1 - context_length)
                override = predicted_tensors[start : n - 1]
            out = model.predict_emphasis(example, history_intensities=override)
            predictions.append([float(v) for v in out.intensity])
            predicted_tensors.append(out.intensity.detach())
    return predictions


@dataclass
class SynthesisResult:
    conversation_id: str
    turn_index: int
    words: tuple[str, ...]
    intensities: list[float]
    mel: np.ndarray
    durations: np.ndarray
    pitch: np.ndarray  # z-scored prediction per frame
    energy: np.ndarray  # z-scored prediction per frame
    word_frame_spans: list[tuple[int, int]]
    waveform: np.ndarray | None


def _word_frame_spans(word_phoneme_spans, durations: np.ndarray) -> list[tuple[int, int]]:
    boundaries = np.concatenate([[0], np.cumsum(durations)])
    return [(int(boundaries[s]), int(boundaries[e])) for s, e in word_phoneme_spans]


def synthesize(
    state: TrainedState,
    conversation: Conversation,
    turn_index: int,
    corpus_root: str | Path | None = None,
    gold_history: bool = True,
    reconstruct_iterations: int = 0,
) -> SynthesisResult:
    """Run the prediction path, emphasis regulator, and acoustic model for
    one turn; optionally reconstruct an audition waveform."""
    if not 1 <= turn_index <= len(conversation.turns):
        raise ValueError(f"turn {turn_index} out of range 1..{len(conversation.turns)}")
    extractor = FeatureExtractor(state.config, corpus_root)
    model = state.model
    model.eval()
    features = [extractor.turn_features(conversation, u) for u in conversation.turns]
    with torch.no_grad():
        example = _turn_example(
            features, conversation.conversation_id, turn_index, state.config.context_length
        )
        override = None
        if not gold_history and example.history:
            preds = predict_dialogue(state, conversation, corpus_root, gold_history=False)
            start = max(0, turn_index - 1 - state.config.context_length)
            override = [
                torch.tensor(p, dtype=torch.float32)
                for p in preds[start : turn_index - 1]
            ]
        emphasis = model.predict_emphasis(example, history_intensities=override)
        synth_out = model.synthesize_turn(example.current, emphasis, teacher_force=False)
    durations = synth_out.durations_used.numpy()
    waveform = None
    if reconstruct_iterations > 0:
        waveform = reconstruct_waveform(synth_out.mel, n_iter=reconstruct_iterations)
    return SynthesisResult(
        conversation_id=conversation.conversation_id,
        turn_index=turn_index,
        words=example.current.words,
        intensities=[float(v) for v in emphasis.intensity],
        mel=synth_out.mel.numpy(),
        durations=durations,
        pitch=synth_out.pitch.numpy(),
        energy=synth_out.energy.numpy(),
        word_frame_spans=_word_frame_spans(example.current.word_phoneme_spans, durations),
        waveform=waveform,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("match_1", "match_2", "match_mean", "f1_1", "f1_2", "f1_mean")


def evaluate(
    state: TrainedState,
    conversations: list[Conversation],
    corpus_root: str | Path | None = None,
    gold_history: bool = True,
    acoustic_mae: bool = True,
) -> dict[str, float]:
    """Emphasis agreement metrics over every turn with history, plus MAE on
    teacher-force-aligned acoustic features when targets are available (the
    MAE path always reads gold history labels)."""
    extractor = FeatureExtractor(state.config, corpus_root)
    model = state.model
    model.eval()
    instances = []
    mae_p, mae_e, mae_d = [], [], []
    with torch.no_grad():
        for conv in conversations:
            preds = predict_dialogue(
                state, conv, corpus_root, gold_history=gold_history, extractor=extractor
            )
            features = [extractor.turn_features(conv, u) for u in conv.turns]
            for n in range(2, len(conv.turns) + 1):
                current = features[n - 1]
                if current.intensity is None:
                    continue
                gt = tuple(float(v) for v in current.intensity)
                instances.append(
                    EmphasisTestInstance(ground_truth=gt, predicted=tuple(preds[n - 1]))
                )
                if not acoustic_mae or current.targets is None:
                    continue
                example = _turn_example(
                    features, conv.conversation_id, n, state.config.context_length
                )
                emphasis = model.predict_emphasis(example)
                out = model.synthesize_turn(current, emphasis, teacher_force=True)
                adaptor = model.acoustic.adaptor
                target_pitch = adaptor.z_pitch(
                    torch.as_tensor(current.targets.pitch, dtype=out.pitch.dtype)
                )
                target_energy = adaptor.z_energy(
                    torch.as_tensor(current.targets.energy, dtype=out.energy.dtype)
                )
                mae_p.append(mae(out.pitch.numpy(), target_pitch.numpy()))
                mae_e.append(mae(out.energy.numpy(), target_energy.numpy()))
                mean_true = float(np.mean(current.targets.durations))
                pred_durations = torch.exp(out.log_duration).numpy()
                mae_d.append(
                    mae(pred_durations / mean_true, normalize_durations(current.targets.durations))
                )
    if not instances:
        raise TrainingError("no evaluable turns (need conversations with >= 2 turns)")
    results = {
        "match_1": match_m(instances, 1),
        "match_2": match_m(instances, 2),
        "f1_1": f1_m(instances, 1),
        "f1_2": f1_m(instances, 2),
        "instances": float(len(instances)),
    }
    results["match_mean"] = (results["match_1"] + results["match_2"]) / 2
    results["f1_mean"] = (results["f1_1"] + results["f1_2"]) / 2
    if mae_p:
        results["mae_p"] = float(np.mean(mae_p))
        results["mae_e"] = float(np.mean(mae_e))
        results["mae_d"] = float(np.mean(mae_d))
    return results


# ---------------------------------------------------------------------------
# Sweeps and ablations
# ---------------------------------------------------------------------------


def sweep_context(
    config: RunConfig,
    conversations: list[Conversation],
    lengths: tuple[int, ...] = (4, 6, 8, 10, 12, 14, 16),
    corpus_root: str | Path | None = None,
) -> list[dict[str, float]]:
    """Train and evaluate once per context length; rows mirror the context
    length report (six metric columns per length)."""
    split = split_corpus(conversations, seed=config.seed)
    by_id = {c.conversation_id: c for c in conversations}
    train_convs = [by_id[i] for i in split.train]
    test_convs = [by_id[i] for i in split.test] or [by_id[i] for i in split.validation]
    rows = []
    for length in lengths:
        cfg = replace(config, context_length=length)
        state = train(cfg, train_convs, corpus_root)
        metrics = evaluate(state, test_convs, corpus_root, gold_history=True, acoustic_mae=False)
        row = {"length": float(length)}
        row.update({k: metrics[k] for k in METRIC_COLUMNS})
        rows.append(row)
    return rows


ABLATION_EXPERIMENTS: dict[int, dict[str, object]] = {
    # rendering experiments: full joint training with a component removed
    1: dict(use_coarse_text=False, use_coarse_audio=False),
    2: dict(use_fine_text=False, use_fine_audio=False),
    3: dict(hybrid_attention=False),
    4: dict(cross_attention=False),
    5: dict(bidirectional=False),
    6: dict(memory_carry=False),
    7: dict(binary_labels=True),
    # prediction-only experiments: every combination of the four encoders
    8: dict(use_coarse_text=False, use_fine_text=False, use_coarse_audio=False,
            use_fine_audio=False, train_tts=False),
    9: dict(use_fine_text=False, use_coarse_audio=False, use_fine_audio=False, train_tts=False),
    10: dict(use_coarse_text=False, use_coarse_audio=False, use_fine_audio=False, train_tts=False),
    11: dict(use_coarse_audio=False, use_fine_audio=False, train_tts=False),
    12: dict(use_coarse_text=False, use_fine_text=False, use_fine_audio=False, train_tts=False),
    13: dict(use_coarse_text=False, use_fine_text=False, use_coarse_audio=False, train_tts=False),
    14: dict(use_coarse_text=False, use_fine_text=False, train_tts=False),
    15: dict(use_fine_text=False, use_fine_audio=False, train_tts=False),
    16: dict(use_coarse_text=False, use_coarse_audio=False, train_tts=False),
    # prediction-only variants of the key-technique ablations
    17: dict(bidirectional=False, train_tts=False),
    18: dict(memory_carry=False, train_tts=False),
    19: dict(hybrid_attention=False, train_tts=False),
    20: dict(cross_attention=False, train_tts=False),
}


def ablate(config: RunConfig, experiment_id: int) -> RunConfig:
    """Configuration for ablation experiment 1..20."""
    if experiment_id not in ABLATION_EXPERIMENTS:
        raise ValueError(f"experiment id must be 1..20, got {experiment_id}")
    return replace(config, **ABLATION_EXPERIMENTS[experiment_id])
