"""Exception types raised across the package."""


class BaganGPError(Exception):
    """Base class for all package errors."""


# --- data pipeline ---

class MissingSource(BaganGPError):
    pass


class UndecodableImage(BaganGPError):
    def __init__(self, path):
        super().__init__(f"could not decode image: {path}")
        self.path = path


class LabelMismatch(BaganGPError):
    def __init__(self, n_images, n_labels):
        super().__init__(f"image count {n_images} != label count {n_labels}")
        self.n_images = n_images
        self.n_labels = n_labels


class TargetExceedsAvailable(BaganGPError):
    def __init__(self, class_index, requested, available):
        super().__init__(
            f"class {class_index}: requested {requested} samples, "
            f"only {available} available"
        )
        self.class_index = class_index
        self.requested = requested
        self.available = available


class AlreadyScaled(BaganGPError):
    pass


# --- networks ---

class InvalidConfig(BaganGPError):
    pass


class OutOfRangeLabel(BaganGPError):
    pass


class DimMismatch(BaganGPError):
    pass


class ShapeMismatch(BaganGPError):
    def __init__(self, layer, expected=None, got=None):
        msg = f"shape mismatch at layer {layer!r}"
        if expected is not None:
            msg += f": expected {expected}, got {got}"
        super().__init__(msg)
        self.layer = layer


# --- pretraining / training ---

class NonFiniteLoss(BaganGPError):
    def __init__(self, step):
        super().__init__(f"training diverged: non-finite loss at step {step}")
        self.step = step


class EmptyClass(BaganGPError):
    def __init__(self, class_index):
        super().__init__(f"class {class_index} has no samples")
        self.class_index = class_index


class NotPSD(BaganGPError):
    pass


class CheckpointIncompatible(BaganGPError):
    pass


# --- losses ---

class NonFiniteInput(BaganGPError):
    pass


class NonFiniteGradient(BaganGPError):
    pass


class ClassCountOne(BaganGPError):
    pass


# --- evaluation ---

class TooFewSamples(BaganGPError):
    pass


class ComplexResidual(BaganGPError):
    pass


class EmptyClassInValidation(BaganGPError):
    def __init__(self, class_index):
        super().__init__(f"validation set has no samples of class {class_index}")
        self.class_index = class_index


class MissingRealExample(BaganGPError):
    def __init__(self, class_index):
        super().__init__(f"no real example supplied for class {class_index}")
        self.class_index = class_index


class SingleClass(BaganGPError):
    pass


class ExtractorUnavailable(BaganGPError):
    pass


# --- cli / config ---

class ConfigError(BaganGPError):
    pass
