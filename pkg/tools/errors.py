"""
Checked failures raised across cuefuse.

Every class carries a short machine code; the CLI prints it as
``error[<CODE>]: <message>`` so scripts can grep for the failing stage.
"""


class CueFuseError(ValueError):
    """Base class for every checked failure"""
    code = "CUEFUSE"

    def one_line(self) -> str:
        message = " ".join(str(self).split())
        return f"error[{self.code}]: {message}"


class ShapeError(CueFuseError):
    code = "SHAPE"


class NonFiniteError(CueFuseError):
    code = "NONFINITE"


class HypothesisError(CueFuseError):
    code = "HYPOTHESIS"


class GeometryError(CueFuseError):
    code = "GEOMETRY"


class VolumeError(CueFuseError):
    code = "VOLUME"


class FusionError(CueFuseError):
    code = "FUSION"


class AttentionMemoryError(FusionError):
    code = "ATTENTION_MEMORY"


class LossError(CueFuseError):
    code = "LOSS"


class SceneError(CueFuseError):
    code = "SCENE"


class DatasetError(CueFuseError):
    code = "DATASET"


class MetricError(CueFuseError):
    code = "METRIC"


class ConfigError(CueFuseError):
    code = "CONFIG"


class CheckpointError(CueFuseError):
    code = "CHECKPOINT"


class GradCheckError(CueFuseError):
    code = "GRADCHECK"


class TrainingError(CueFuseError):
    code = "TRAINING"
