"""porophys: machine-independent physical-effect features and porosity models
for laser powder bed fusion."""

from .geometry import BuildSetup, LaserSpec, LayerPoint, PartInstance
from .physics import PhotonBudget, PhysicalConstants, PointEffects
from .features import FeatureVector, NormalizationState, PhysicsProfile
from .regress import GprHyper, KernelSpec, SvrHyper, TrainedModel
from .evaluate import FoldReport, PartDataset, QualityGate
from .influence import EffectPorosityMap, InfluenceRegion
from .dataio import PorosityRecord, SynthSpec

__version__ = "0.1.0"

__all__ = [
    "BuildSetup", "LaserSpec", "LayerPoint", "PartInstance",
    "PhotonBudget", "PhysicalConstants", "PointEffects",
    "FeatureVector", "NormalizationState", "PhysicsProfile",
    "GprHyper", "KernelSpec", "SvrHyper", "TrainedModel",
    "FoldReport", "PartDataset", "QualityGate",
    "EffectPorosityMap", "InfluenceRegion",
    "PorosityRecord", "SynthSpec",
    "__version__",
]
