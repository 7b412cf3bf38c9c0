"""Temporal coherence scoring: distortion pretext task over shot sequences."""

from .distortions import (DistortionKind, JITTER_SCALE_HI, JITTER_SCALE_LO,
                          apply_distortion, enabled_kinds, jitter_histogram,
                          sample_distortion, sample_k)
from .model import (TcmConfig, classify, encode_stream, init_tcm_params,
                    lstm_forward, score_sequence, tcm_config_dict,
                    tcm_config_from_dict)
from .prior import prior_scales, temporal_prior, temporal_prior_graph
from .train import (TrainTcmConfig, batch_loss_graph, sample_crop,
                    sequence_logits_graph, train_tcm)

__all__ = [
    "DistortionKind", "JITTER_SCALE_HI", "JITTER_SCALE_LO", "TcmConfig",
    "TrainTcmConfig", "apply_distortion", "batch_loss_graph", "classify",
    "enabled_kinds", "encode_stream", "init_tcm_params", "jitter_histogram",
    "lstm_forward", "prior_scales", "sample_crop", "sample_distortion",
    "sample_k", "score_sequence", "sequence_logits_graph", "tcm_config_dict",
    "tcm_config_from_dict", "temporal_prior", "temporal_prior_graph",
    "train_tcm",
]
