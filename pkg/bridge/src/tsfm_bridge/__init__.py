"""Export embeddings and forecasts from forecasting backbones into the F2AE
interchange format consumed by the f2a engine."""

from .backbones import BACKBONES, BackboneLoadError, FourierBackbone, NaiveBackbone, get_backbone
from .export import BridgeJob, ExportReport, export
from .windows import read_csv, standardize_channels, window_starts

__version__ = "0.1.0"
