"""Important and uncertain word explanations for calibrated text classifiers."""

from .attribution import (
    Attribution,
    DigestEntry,
    ExplanationDigest,
    exact_shapley_attribution,
    loo_attribution,
    make_digest,
    remove_positions,
    sampling_shapley_attribution,
)
from .calibration import CalibrationResult, ReliabilityBin, apply_temperature, compute_ece, fit_temperature
from .classifier import (
    BagOfWordsModel,
    Classifier,
    Prediction,
    RemoteClassifier,
    TemperatureScaled,
    predict,
    predict_batch,
    softmax,
    train_bow,
)
from .corpus import Corpus, LabelSpace, TokenizedExample, Vocabulary, build_vocab, load_corpus, split_corpus, tokenize
from .evaluation import ConfidenceChangeReport, confidence_change_experiment, important_removal_check
from .lmi import FeatureTally, LmiDistribution, compute_lmi, tally_features, top_tokens
from .reporting import RenderSpec, export_run, render_example_html
from .synthetic import mixed_polarity_corpus

__version__ = "0.1.0"
