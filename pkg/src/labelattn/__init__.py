"""labelattn: training one classifier from multiple noisy annotation sets by
attending over the label sets with meta-training feedback."""

from ._kernels import BACKEND
from .annotators import (AnnotatorSpec, ConfusionMatrix, NoisyLabelSet, cm_adversarial,
                         cm_average, cm_hammer_spammer, cm_ordered_confusion,
                         cm_structured_flips, corrupt, empirical_cm, noise_level_of)
from .autodiff import (Tensor, backward, bce_loss, concat, constant, detach,
                       finite_diff_grad, gradients, matmul, relu, sigmoid, softmax,
                       tensor_new)
from .config import ExperimentConfig, config_hash, parse_config
from .data import (Batch, LabeledDataset, SyntheticSpec, attach_annotators,
                   load_cifar10, minibatches, one_hot, split, synth_blobs)
from .experiment import (ResultRecord, emit, read_records, run_experiment, run_single,
                         sweep_annotators, sweep_noise)
from .metatrain import (AttentionParams, MetaConfig, attend, attention_init,
                        attention_step, binarize, collect_feedback, final_step,
                        load_checkpoint, meta_step, reweighted_loss, sample_label,
                        save_checkpoint, theorem1_gap, train_attention,
                        train_baseline, train_iteration)
from .metrics import accuracy, auc_roc, mean_auc, per_class_auc
from .model import (Classifier, ForwardResult, classifier_init, forward, load_params,
                    params_get, params_set, predict_class, save_params)
from .optim import AdamState, adam_init, adam_step, sgd_step

__version__ = "0.1.0"
