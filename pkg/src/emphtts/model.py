"""Full model assembly: speaker table, context encoders, fusion, emphasis
predictor, and the acoustic synthesizer, wired per the run configuration's
ablation flags.

Empty histories run in empty-history mode (zero context features); with all
four encoders disabled the predictor falls back to the current utterance's
projected word features. The synthesizer reads the emphasis hidden feature
detached, so the emphasis predictor is trained only by the emphasis loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import RunConfig
from .context_encoders import (
    ContextBundle,
    CoarseAudioEncoder,
    CoarseTextEncoder,
    FineAudioMemoryEncoder,
    FineTextMemoryEncoder,
)
from .dataset import DialogueExample, TurnFeatures
from .frontends import SpeakerTable
from .fusion import CrossModalFusion, HybridFusion, IntensityPredictor, emphasis_bce
from .synthesizer import (
    AcousticModel,
    SynthOutput,
    total_loss,
    tts_loss,
)

BINARY_THRESHOLD = 0.5


@dataclass
class EmphasisOutput:
    intensity: torch.Tensor  # [w] in (0, 1)
    hidden: torch.Tensor  # [w, predictor_hidden]
    bundle: ContextBundle | None  # None in the no-encoder fallback


class ConversationalTTSModel(nn.Module):
    """Emphasis prediction from dialogue context plus emphatic synthesis."""

    def __init__(
        self,
        config: RunConfig,
        speakers: tuple[str, ...],
        phoneme_inventory: tuple[str, ...],
        pitch_stats: tuple[float, float] = (0.0, 1.0),
        energy_stats: tuple[float, float] = (0.0, 1.0),
    ):
        super().__init__()
        self.config = config
        self.speakers = speakers
        self.phoneme_inventory = phoneme_inventory
        self.speaker_table = SpeakerTable(speakers, config.d_speaker, seed=config.seed)
        self.current_proj = nn.Linear(config.d_word_current, config.d_fuse)

        self.coarse_text = (
            CoarseTextEncoder(
                config.d_sentence_text,
                config.d_speaker,
                config.gru_hidden,
                config.gru_layers,
                config.d_fuse,
                config.bidirectional,
            )
            if config.use_coarse_text
            else None
        )
        self.fine_text = (
            FineTextMemoryEncoder(
                config.d_word_history,
                config.d_word_current,
                config.d_speaker,
                config.fine_d_qkv,
                config.fine_heads,
                config.d_fuse,
                bidirectional=config.bidirectional,
                memory=config.memory_carry,
            )
            if config.use_fine_text
            else None
        )
        self.coarse_audio = (
            CoarseAudioEncoder(
                config.d_sentence_audio,
                config.d_speaker,
                config.gru_hidden,
                config.gru_layers,
                config.d_fuse,
                config.bidirectional,
            )
            if config.use_coarse_audio
            else None
        )
        self.fine_audio = (
            FineAudioMemoryEncoder(
                config.d_frame_audio,
                config.d_speaker,
                config.fine_d_qkv,
                config.fine_heads,
                config.d_fuse,
                bidirectional=config.bidirectional,
                memory=config.memory_carry,
            )
            if config.use_fine_audio
            else None
        )

        self.hybrid_text = HybridFusion(config.d_fuse, config.fusion_heads)
        self.hybrid_audio = HybridFusion(config.d_fuse, config.fusion_heads)
        self.cross_modal = CrossModalFusion(config.d_fuse, config.fusion_heads)
        self.predictor = IntensityPredictor(config.d_fuse, config.predictor_hidden)
        # 0/1 label embedding for the binary-label ablation
        self.label_embedding = nn.Embedding(2, config.predictor_hidden)
        self.acoustic = AcousticModel(
            phoneme_inventory,
            config.synth_d_model,
            d_speaker=config.d_speaker,
            d_emphasis=config.predictor_hidden,
            n_mels=config.n_mels,
            heads=config.synth_heads,
            encoder_layers=config.synth_encoder_layers,
            decoder_layers=config.synth_decoder_layers,
            pitch_stats=pitch_stats,
            energy_stats=energy_stats,
        )

    @property
    def any_encoder(self) -> bool:
        return any(
            m is not None
            for m in (self.coarse_text, self.fine_text, self.coarse_audio, self.fine_audio)
        )

    def speaker_vector(self, speaker_id: str) -> torch.Tensor:
        return self.speaker_table(speaker_id)

    def predict_emphasis(
        self,
        example: DialogueExample,
        history_intensities: list[torch.Tensor] | None = None,
        return_bundle: bool = False,
    ) -> EmphasisOutput:
        """Predict per-word intensity for the example's current turn.

        ``history_intensities`` overrides the stored history labels (used for
        chained inference where history emphasis is itself predicted).
        """
        cur = example.current
        f_current = self.current_proj(cur.words_current_role)

        if not self.any_encoder:
            intensity, hidden = self.predictor(f_current)
            return EmphasisOutput(intensity=intensity, hidden=hidden, bundle=None)

        history = example.history
        d_fuse = self.config.d_fuse
        n_words = f_current.shape[0]
        spk_current = self.speaker_vector(cur.speaker_id)

        if history:
            spk_history = [self.speaker_vector(t.speaker_id) for t in history]
            intensities = (
                history_intensities
                if history_intensities is not None
                else [t.intensity for t in history]
            )
            if len(intensities) != len(history):
                raise ValueError(
                    f"{len(intensities)} intensity vectors for {len(history)} history turns"
                )
            f_t_coar = (
                self.coarse_text(
                    torch.stack([t.sentence_text for t in history]),
                    cur.sentence_text,
                    torch.stack(spk_history),
                    spk_current,
                )
                if self.coarse_text is not None
                else torch.zeros(d_fuse)
            )
            f_t_fine = (
                self.fine_text(
                    [t.words_history_role for t in history],
                    intensities,
                    cur.words_current_role,
                    spk_history,
                    spk_current,
                )
                if self.fine_text is not None
                else torch.zeros(n_words, d_fuse)
            )
            f_a_coar = (
                self.coarse_audio(
                    torch.stack([t.sentence_audio for t in history]),
                    torch.stack(spk_history),
                )
                if self.coarse_audio is not None
                else torch.zeros(d_fuse)
            )
            f_a_fine = (
                self.fine_audio([t.frames for t in history], spk_history)
                if self.fine_audio is not None
                else torch.zeros(1, d_fuse)
            )
        else:
            # empty-history mode: zero context features
            f_t_coar = torch.zeros(d_fuse)
            f_t_fine = torch.zeros(n_words, d_fuse)
            f_a_coar = torch.zeros(d_fuse)
            f_a_fine = torch.zeros(1, d_fuse)

        bundle = ContextBundle(
            f_t_coar=f_t_coar,
            f_t_fine=f_t_fine,
            f_a_coar=f_a_coar,
            f_a_fine=f_a_fine,
            f_t_fine_current=f_current,
        )
        f_t = self.hybrid_text(
            f_t_coar, f_current, f_t_fine, use_attention=self.config.hybrid_attention
        )
        f_a = self.hybrid_audio(
            f_a_coar, f_current, f_a_fine, use_attention=self.config.hybrid_attention
        )
        f_ta = self.cross_modal(f_t, f_a, use_attention=self.config.cross_attention)
        intensity, hidden = self.predictor(f_ta)
        return EmphasisOutput(
            intensity=intensity, hidden=hidden, bundle=bundle if return_bundle else None
        )

    def emphasis_features_for_synthesis(
        self, emphasis: EmphasisOutput, gold_intensity: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Features handed to the emphasis regulator, detached from the
        predictor so synthesis losses do not train it.

        In binary-label mode the hidden feature is replaced by an embedding
        of the 0/1 labels (gold when provided, else thresholded prediction).
        """
        if self.config.binary_labels:
            source = gold_intensity if gold_intensity is not None else emphasis.intensity
            labels = (source > BINARY_THRESHOLD).long()
            return self.label_embedding(labels)
        return emphasis.hidden.detach()

    def synthesize_turn(
        self,
        turn: TurnFeatures,
        emphasis: EmphasisOutput,
        gold_intensity: torch.Tensor | None = None,
        teacher_force: bool = False,
    ) -> SynthOutput:
        h_emp = self.emphasis_features_for_synthesis(emphasis, gold_intensity)
        return self.acoustic(
            turn.phonemes,
            turn.word_phoneme_spans,
            h_emp,
            self.speaker_vector(turn.speaker_id),
            targets=turn.targets if teacher_force else None,
        )

    def forward_train(self, example: DialogueExample) -> dict[str, torch.Tensor]:
        """Joint training losses for one example (teacher-forced)."""
        emphasis = self.predict_emphasis(example)
        target = example.current.intensity
        losses: dict[str, torch.Tensor] = {
            "emphasis": emphasis_bce(emphasis.intensity, target)
        }
        if self.config.train_tts:
            synth_out = self.synthesize_turn(
                example.current, emphasis, gold_intensity=target, teacher_force=True
            )
            components = tts_loss(synth_out, example.current.targets, self.acoustic.adaptor)
            losses.update(components)
            losses["total"] = total_loss(
                components, losses["emphasis"], self.config.lambda_emp
            )
        else:
            losses["total"] = losses["emphasis"]
        return losses
