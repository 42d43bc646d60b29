"""Adapter that exports pretrained-backbone feature maps, together with
simulator state labels, into staterank probe-dataset directories. The
dataset file format is the only coupling to the ranking toolkit."""

from .backbones import BackboneError, BackboneSpec, extract_feature_map, load_backbone
from .extract import ExtractionError, extract, preprocess_image
from .labels import LabelError, read_labels

__version__ = "0.1.0"
