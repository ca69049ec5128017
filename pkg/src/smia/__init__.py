"""Stabilized gradient-sign adversarial attacks with Fisher/KL diagnostics."""

from .attacks import (AttackConfig, AttackTrace, run_attack, run_deepfool,
                      run_fgsm, run_iterative_dev, run_smia, traces_equal)
from .datasets import (Dataset, load_idx, split_normalize, synth_digits,
                       synth_segmentation, write_idx)
from .diagnostics import (FisherReport, fisher_output_matrix, fisher_trace,
                          input_fisher, kl_divergence, taylor_gap, uniform_gap)
from .gradcheck import finite_diff_check
from .losses import LossSpec, cross_entropy, input_gradient
from .metrics import (MetricsReport, classification_metrics, cosine_similarity,
                      jaccard_index, perturbation_variance,
                      positive_cosine_fraction)
from .models import (ConvClassifier, EllipseSegmenter, LinearSoftmax,
                     MlpClassifier, Prediction, forward, load_checkpoint,
                     predict_labels, save_checkpoint)
from .smoothing import (GaussianKernel, convolve_same, make_gaussian_kernel,
                        smoothed_residual)
from .training import TrainConfig, train_sgd

__version__ = "0.1.0"
