"""Pointer-generator summarisation with linguistic cues and coreference-guided attention."""
from .config import Config, ConfigError
from .annotate import AnnotatedDocument, Vocabulary, annotate_document
from .model import ModelParameters, init_parameters
from .decode import DecodingTrace, decode, resolve_tokens
from .metrics import MetricsReport, build_report, fisher_pitman_test
from .synthetic import SyntheticTaskSpec, generate_synthetic
from .train import evaluate, train

__version__ = "0.1.0"
