"""Reference adapter exposing any label function over the oracle wire protocol."""

from .adapter import DEFAULT_MAX_BATCH, AdapterConfig, answer_line, run_adapter, serve_stream
from .dataset import DatasetFormatError, load_dataset, read_cloud, read_pcb, read_xyz
from .models import (FEATURE_DIM, CentroidModel, ConstantModel, cloud_features,
                     fit_centroid_model, resolve_model)
from .protocol import (MAX_FRAME_BYTES, UNKNOWN_ID, ProtocolError, decode_request,
                       encode_error, encode_request, encode_response, read_frame_line)

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig", "CentroidModel", "ConstantModel", "DatasetFormatError",
    "DEFAULT_MAX_BATCH", "FEATURE_DIM", "MAX_FRAME_BYTES", "ProtocolError", "UNKNOWN_ID",
    "answer_line", "cloud_features", "decode_request", "encode_error", "encode_request",
    "encode_response", "fit_centroid_model", "load_dataset", "read_cloud", "read_frame_line",
    "read_pcb", "read_xyz", "resolve_model", "run_adapter", "serve_stream",
]
