"""Exception hierarchy shared by every module of the toolkit."""


class PoseToolkitError(ValueError):
    """Base class for all domain errors raised by apparentpose."""


class DegenerateInput(PoseToolkitError):
    """A rotation representation is too close to singular to be used."""


class BehindCamera(PoseToolkitError):
    """A point or translation has non-positive depth."""


class DegenerateBox(PoseToolkitError):
    """A bounding box is inverted or smaller than the minimum extent."""


class NonPositiveDepth(PoseToolkitError):
    """Depth (or its crop-normalized proxy) is not strictly positive."""


class ParseError(PoseToolkitError):
    """An input file could not be parsed."""


class SchemaError(PoseToolkitError):
    """A parsed record lacks a required field or has the wrong shape."""


class ValidationError(PoseToolkitError):
    """A parsed value violates a domain invariant."""


class UnknownFrame(PoseToolkitError):
    """A frame id is referenced that the dataset does not contain."""


class EmptyDataset(PoseToolkitError):
    """An operation that needs at least one frame received none."""


class EmptyPipeline(PoseToolkitError):
    """A throughput model was requested for zero stages."""


class SpecError(PoseToolkitError):
    """A synthetic dataset specification is invalid."""
