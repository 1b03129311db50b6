"""Logic-aware dual-encoder training and evaluation on synthetic scene corpora."""

from .corpus import CorpusConfig, SampleRecord, build_corpus, read_corpus, write_corpus
from .estimator import DualEncoder
from .evaluation import EncoderModel, evaluate
from .forge import BackendProfile, NegativeForge, Proposal, RetryPolicy
from .review import ReviewStore
from .service import ReviewService
from .taxonomy import CategoryDetector, LogicalCategory, detect_categories
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "BackendProfile",
    "CategoryDetector",
    "CorpusConfig",
    "DualEncoder",
    "EncoderModel",
    "LogicalCategory",
    "NegativeForge",
    "Proposal",
    "RetryPolicy",
    "ReviewService",
    "ReviewStore",
    "SampleRecord",
    "TrainConfig",
    "build_corpus",
    "detect_categories",
    "evaluate",
    "load_checkpoint",
    "read_corpus",
    "save_checkpoint",
    "train",
    "write_corpus",
]

__version__ = "0.1.0"
