"""fcrseg: one-stage instance segmentation with four-channel pixel embeddings.

Touching objects can always be told apart with four labels (the four color
theorem), so the network maps every pixel onto a 4-simplex whose corners
act as cluster centers. A sharpened power normalization keeps the output
differentiable while approaching hard one-hot assignments, and instances
fall out of per-channel connected components, with no clustering stage.
"""

from .activation import ActivationSpec, EmbeddingMap, alpha_at, hard_argmax, param_argmax, positivity, softmax
from .errors import CapacityError, ConfigError, DataError, FcrsegError, ShapeError, TrainingError
from .graph import Coloring, ObjectGraph, build_adjacency, four_colorable
from .imgdata import DatasetSplit, LabelImage, RawImage, load_bbbc006, normalize, resize_pair, synth_blobs
from .loss import LossBreakdown, inter_similarity, intra_similarity, mean_feature, total_loss
from .metrics import EvalReport, aggregated_jaccard, dice2, f1_score, match_instances, panoptic_quality
from .net import ModelState, NetConfig, build, count_parameters, forward, load_checkpoint, save_checkpoint
from .postprocess import InstanceResult, extract_instances, harden, one_hot_map
from .trainer import TrainConfig, desk_configs, evaluate, train

__version__ = "0.1.0"
