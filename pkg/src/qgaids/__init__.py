"""Self-supervised embeddings + quantum-inspired genetic search for network intrusion detection."""

from .classifier import ClassifierParams, Hyper, predict_scores, train_classifier
from .dataset import (EncodedMatrix, FeatureSchema, NormalizationParams, RawTable, SplitSpec,
                      encode, fit_normalizer, load_csv, load_schema, split, synth_dataset)
from .detect import ModelBundle, optimize_pipeline, predict_end_to_end
from .metrics import ConfusionCounts, confusion, report, scores
from .qga import (EvaluationContext, FitnessWeights, QGAConfig, decode, evolve,
                  exhaustive_oracle, fitness, measure, rotate)
from .selfsup import SSLConfig, encode_forward, ntxent_loss, train_ssl

__version__ = "0.1.0"
