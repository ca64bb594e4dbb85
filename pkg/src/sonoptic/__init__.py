"""Optical/SAS underwater object classification.

Optical regions of interest are turned into synthetic sonar highlight/shadow
maps, both modalities are described by the same shape features, and a
quality-weighted quadratic discriminant picks one of Manta, Cylinder,
Natural or Unknown.
"""
from .core import (
    LABELS,
    ImagePair,
    Label,
    LookDirection,
    Modality,
    PointCloud,
    Region,
    RoiImage,
    SegmentationMap,
    SensorGeometry,
    load_manifest,
    load_roi,
    load_segmentation,
    save_roi,
    save_segmentation,
)
from .descriptors import FeatureVector, MorletParams, extract_features
from .evaluation import EvalReport, one_vs_rest_average, run_monte_carlo
from .fusion import QdaModel, TransferFunction, classify, fit, log_density, quality_index
from .geometry import Orientation, RegionStats, orientation_of, region_stats
from .optic2sas import optic_to_sas
from .pipeline import FeatureTable, feature_table, pair_features
from .scenes import BenchmarkConfig, ObjectType, SceneSpec, generate_scene, make_benchmark

__all__ = [
    "LABELS", "ImagePair", "Label", "LookDirection", "Modality", "PointCloud", "Region",
    "RoiImage", "SegmentationMap", "SensorGeometry", "load_manifest", "load_roi",
    "load_segmentation", "save_roi", "save_segmentation",
    "FeatureVector", "MorletParams", "extract_features",
    "EvalReport", "one_vs_rest_average", "run_monte_carlo",
    "QdaModel", "TransferFunction", "classify", "fit", "log_density", "quality_index",
    "Orientation", "RegionStats", "orientation_of", "region_stats",
    "optic_to_sas",
    "FeatureTable", "feature_table", "pair_features",
    "BenchmarkConfig", "ObjectType", "SceneSpec", "generate_scene", "make_benchmark",
]
