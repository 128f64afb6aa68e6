"""Training, evaluation, comparison, ablation and panel rendering."""

from .ablation import ABLATIONS, ablate
from .config import TrainConfig
from .evaluation import EvalReport, compare, evaluate, predict_masks, render_panels
from .training import train

__all__ = ["ABLATIONS", "EvalReport", "TrainConfig", "ablate", "compare", "evaluate", "predict_masks",
           "render_panels", "train"]
