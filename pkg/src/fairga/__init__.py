"""Individual-fairness testing through explanation-guided genetic search."""

from .core import (
    Categorical,
    DiscriminatoryRecord,
    Explanation,
    FeatureSchema,
    FeatureSpec,
    Individual,
    Numeric,
    Origin,
    Population,
    RunMetrics,
    Sample,
    Token,
    dedupe_key,
)
from .data import Dataset, load_schema, load_tabular, load_text, save_schema, save_tabular
from .engine import EngineConfig, SensitivityResolver, run, select_seeds
from .explain import Explainer, ExplainerConfig, fit_surrogate, rank_num
from .knowledge import EmbeddingStore, KnowledgeGraph, SensitivePair, get_pair, is_sensitive, load_graph, synonyms
from .metrics import dss, mann_whitney_u, pca_project, sur, vargha_delaney_a12
from .model import Predictor, TrainConfig, external_predictor, load_model, save_model, train
from .retrain import FairnessReport, RetrainConfig, augment_dataset, retrain_and_evaluate

__version__ = "0.1.0"
