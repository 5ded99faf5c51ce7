"""Exception hierarchy shared across the package."""


class ImcForgeError(Exception):
    """Base class for all tool-specific errors."""


class InputError(ImcForgeError):
    """A file is missing, unparsable, or violates its schema (CLI exit code 2)."""


class ModelError(ImcForgeError):
    """A model-level failure such as an infeasible layer (CLI exit code 1)."""


class InsufficientDataError(ModelError):
    """Too few usable datapoints to run a fit."""


class MappingError(ModelError):
    """A spatial/temporal mapping violates its contract for the given layer and macro."""


class MappingRejected(ImcForgeError):
    """A candidate mapping cannot run on this memory hierarchy; the search skips it."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class InfeasibleLayerError(ModelError):
    """No legal mapping exists for a layer on the given architecture."""
