class LoopxError(Exception):
    """Base class for every error raised by the engine"""


class ValidationFailure(LoopxError):
    """Bad input, bad configuration or a broken on-disk contract (CLI exit code 2)"""


class InvalidImage(ValidationFailure):
    pass


class LevelCountTooLarge(ValidationFailure):
    pass


class MismatchedPyramid(ValidationFailure):
    pass


class DimensionMismatch(ValidationFailure):
    pass


class ImageTooSmall(ValidationFailure):
    pass


class ConfigError(ValidationFailure):
    pass


class CheckpointError(ValidationFailure):
    """Checkpoint file has the wrong magic, header or payload size"""


class MissingManifest(ValidationFailure):
    pass


class MalformedEvName(ValidationFailure):
    pass


class NonMonotoneEvList(ValidationFailure):
    pass


class MissingGroundTruth(ValidationFailure):
    pass


class EmptyDataset(ValidationFailure):
    pass


class CacheMismatch(LoopxError):
    """Backward pass was handed a cache produced by different params or a different image"""


class NonFiniteGradient(LoopxError):
    pass


class TrainerStateError(LoopxError):
    pass


class DriftAbort(LoopxError):
    """Pseudo-label drift exceeded the threshold on two consecutive joint rounds"""

    def __init__(self, round_index: int, drift: float, threshold: float):
        self.round_index = round_index
        self.drift = drift
        self.threshold = threshold
        super().__init__(
            f"pseudo-label drift {drift:.4f} > {threshold:.4f} twice in a row (round {round_index})"
        )
