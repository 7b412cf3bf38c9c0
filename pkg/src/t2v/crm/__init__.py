"""Clip retrieval model: encoders, ranking losses, and training."""

from .losses import mil_nce_batch, mil_nce_loss, vse_loss, vsepp_loss
from .model import (
    CrmConfig,
    MODES,
    batch_bag_logits,
    config_dict,
    context_interact,
    cos_sim_clamped,
    crm_config_from_dict,
    embed_shots,
    encode_shot_sequence,
    encode_text,
    encode_texts,
    head_apply,
    init_crm_params,
    split_point,
    step_query,
)
from .train import LOSSES, TrainCrmConfig, batch_loss_graph, train_crm

__all__ = [
    "mil_nce_batch", "mil_nce_loss", "vse_loss", "vsepp_loss",
    "CrmConfig", "MODES", "batch_bag_logits", "config_dict",
    "context_interact", "cos_sim_clamped", "crm_config_from_dict",
    "embed_shots", "encode_shot_sequence", "encode_text", "encode_texts",
    "head_apply", "init_crm_params", "split_point", "step_query",
    "LOSSES", "TrainCrmConfig", "batch_loss_graph", "train_crm",
]
