from .spotter import EncodedSequence, ModelConfig, SpotterModel
from .decode import SpanPrediction, answer_confidence, predict_span, top_k_spans
from .framing import FramedInstance, frame_instance
from .infer import DocumentSpan, predict_document
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "DocumentSpan",
    "EncodedSequence",
    "FramedInstance",
    "ModelConfig",
    "SpanPrediction",
    "SpotterModel",
    "answer_confidence",
    "frame_instance",
    "load_checkpoint",
    "predict_document",
    "predict_span",
    "save_checkpoint",
    "top_k_spans",
]
