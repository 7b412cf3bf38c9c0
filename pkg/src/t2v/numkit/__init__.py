"""Minimal reverse-mode gradient engine and trainer plumbing."""

from . import graph
from .gradcheck import finite_diff_grad, max_rel_err
from .graph import Node, NumericError, grad
from .params import ParamSet, sgd_step
from .schedule import LrSchedule, lr_at

__all__ = [
    "graph",
    "Node",
    "NumericError",
    "ParamSet",
    "LrSchedule",
    "grad",
    "finite_diff_grad",
    "max_rel_err",
    "sgd_step",
    "lr_at",
]
