"""Sequential multi-hypothesis segmentation with a recurrent prompt loop."""

from .errors import FormatError, InvalidArgumentError, SeqSegError, SizeLimitError, TrainingDivergenceError
from .mask_ops import binarize, dice, dist, iou, majority_vote, soft_dice_loss
from .matching import brute_force_assignment, build_cost_matrix, hungarian, set_loss
from .metrics import EvalScores, dice_avg, ged, wilcoxon_signed_rank
from .model import ModelConfig, SeqSegModel, mcl_loss
from .sequence_control import partition, sample_per_chunk, select_ablation, select_inference
from .synthdata import DatasetConfig, Sample, bbox_from_labels, generate_dataset, generate_sample, read_dataset, write_dataset

__version__ = "0.1.0"
