from .augment import AugmentedBatch, multi_scale_augment, scaled_size
from .loop import TrainConfig, TrainingDiverged, TrainResult, evaluate, heldout_set, train_loop
from .loss import sequence_loss, sequence_weights
from .optim import AdamW, clip_grad_norm, global_norm, one_cycle_lr
from .synthetic import KINDS, Scene, SyntheticSample, make_scene, synth_batch, synth_pair

__all__ = [
    "AugmentedBatch", "multi_scale_augment", "scaled_size", "TrainConfig", "TrainingDiverged", "TrainResult",
    "evaluate", "heldout_set", "train_loop", "sequence_loss", "sequence_weights", "AdamW", "clip_grad_norm",
    "global_norm", "one_cycle_lr", "KINDS", "Scene", "SyntheticSample", "make_scene", "synth_batch", "synth_pair",
]
