"""Vibration-based fault diagnosis: pretrain a 1-D CNN backbone on a
multi-fault corpus, then adapt it to downstream tasks with small labeled
fractions by freezing most layers and retraining a short prefix plus a
fresh classification head.
"""

from .autodiff import GradTape, Tensor, backward, conv1d, cross_entropy, dense, \
    global_avg_pool, leaky_relu
from .finetune import FineTuneConfig, TargetTask, finetune, prepare_finetune, \
    run_target_task
from .gradcheck import finite_difference_check
from .metrics import evaluate
from .model import Model, build_backbone, build_cnn, load_checkpoint, save_checkpoint
from .optim import Adam
from .pipeline import DatasetSplit, SignalRecord, SpeedProfile, WindowedSample, \
    add_noise, build_split, normalize, segment, stratified_fraction
from .synth import FaultSignature, MachineSpec, gen_machine_dataset, gen_record, \
    spectral_label_oracle
from .train import TrainConfig, TrainHistory, pretrain

__version__ = "0.1.0"

__all__ = [
    "Adam", "DatasetSplit", "FaultSignature", "FineTuneConfig", "GradTape",
    "MachineSpec", "Model", "SignalRecord", "SpeedProfile", "TargetTask",
    "Tensor", "TrainConfig", "TrainHistory", "WindowedSample", "add_noise",
    "backward", "build_backbone", "build_cnn", "build_split", "conv1d",
    "cross_entropy", "dense", "evaluate", "finetune", "finite_difference_check",
    "gen_machine_dataset", "gen_record", "global_avg_pool", "leaky_relu",
    "load_checkpoint", "normalize", "prepare_finetune", "pretrain",
    "run_target_task", "save_checkpoint", "segment", "spectral_label_oracle",
    "stratified_fraction",
]
