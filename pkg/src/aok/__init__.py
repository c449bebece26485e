"""Aneurysm occlusion outcome toolkit.

Morphometry from annotated angiograms, prevalence and information-gain
feature selection, missing-value-aware classifiers, and cross-validated
outcome reporting, plus a synthetic cohort generator for end-to-end runs.
"""

from aok.core import (
    AneurysmLocation,
    ClinicalRecord,
    Column,
    ColumnKind,
    ConditionVocabulary,
    Contour2D,
    ContourStack3D,
    CoreError,
    Detection,
    FeatureMatrix,
    FeatureSetId,
    Gender,
    Mask2D,
    Mask3D,
    Measurement2D,
    OcclusionLabel,
    Provenance,
    RuptureStatus,
    SacMesh,
    Side,
    Source,
    VesselAnnotation,
    View,
    validate_record,
)

__version__ = "0.1.0"

__all__ = [
    "AneurysmLocation",
    "ClinicalRecord",
    "Column",
    "ColumnKind",
    "ConditionVocabulary",
    "Contour2D",
    "ContourStack3D",
    "CoreError",
    "Detection",
    "FeatureMatrix",
    "FeatureSetId",
    "Gender",
    "Mask2D",
    "Mask3D",
    "Measurement2D",
    "OcclusionLabel",
    "Provenance",
    "RuptureStatus",
    "SacMesh",
    "Side",
    "Source",
    "VesselAnnotation",
    "View",
    "validate_record",
]
