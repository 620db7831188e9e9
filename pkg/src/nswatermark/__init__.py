"""Minimum-constraint text watermarking with DP beam search, baselines,
detection and Monte-Carlo checks of the soft-watermark theory."""

from .baselines import SoftParams, decode_adaptive_soft, decode_hard, decode_plain, decode_soft
from .config import ConfigError, RunConfig, WatermarkConfig, dump_config, load_config
from .detector import DetectionReport, count_green, detect, z_score
from .evaluation import ConfusionSummary, EvalRecord, confusion_metrics, post_edit_attack, run_corpus
from .linear_decoder import band_bounds, decode_ns_linear, estimate_length
from .lm import EOS_ID, UNK_ID, NGramModel, Vocabulary, build_vocab, sequence_logprob, train_ngram
from .ns_decoder import InfeasibleError, decode_ns, g_max, required_green
from .partition import Partition, PartitionParams, is_green, partition_for, token_score
from .remote import RemoteLogitClient, RemoteLogitError
from .theory import (
    IdealizedRun,
    estimate_multi_green_prob,
    sample_run,
    verify_lemma1,
    y_statistic_sample,
)

__version__ = "0.1.0"
