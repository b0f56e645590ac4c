"""Exception hierarchy shared by all relume modules."""


class RelumeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(RelumeError):
    """Invalid configuration value: unknown kind, bad step count, bad variant."""


class ContractError(RelumeError):
    """A call violated an operation's contract (shape, range, or state)."""


class StepUnderflowError(ContractError):
    """A sampling step was requested below timestep 0."""


class StepOverflowError(ContractError):
    """An inversion step was requested beyond the final timestep."""


class PaddingError(ContractError):
    """Image dimensions are not divisible by the required granularity."""


class CacheMissError(RelumeError):
    """A replay requested a feature bundle that was never recorded."""

    def __init__(self, layer_id: str, t: int):
        super().__init__(f"no cached features for layer {layer_id!r} at timestep {t}")
        self.layer_id = layer_id
        self.t = t


class DegenerateInputError(RelumeError):
    """Input image cannot be processed (e.g. all-zero: intensity scaling undefined)."""


class DegenerateChannelError(RelumeError):
    """A latent channel is constant and cannot be renormalized."""

    def __init__(self, channel: int, std: float):
        super().__init__(
            f"latent channel {channel} has standard deviation {std:.3e}; "
            "a constant channel cannot be renormalized"
        )
        self.channel = channel
        self.std = std


class SuspiciousMaskError(RelumeError):
    """An evaluation mask excludes an implausibly large share of the image."""


class DatasetError(RelumeError):
    """Dataset scanning or pairing failed (orphans, empty intersection, bad n)."""
