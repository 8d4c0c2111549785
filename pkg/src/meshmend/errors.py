"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto stable exit codes: InputError -> 2,
MatchingError -> 3, DegenerateGeometryError -> 4, OutputError -> 5.
"""


class MeshMendError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MeshMendError):
    """Missing, unreadable, or mutually inconsistent input files/arrays."""


class FormatError(InputError):
    """A file failed to parse. Carries the byte offset where parsing stopped."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DegenerateGeometryError(MeshMendError):
    """Geometry too degenerate to proceed (empty meshes, collapsed masks...)."""


class EmptyGeometryError(DegenerateGeometryError):
    """Mesh contains no usable vertices or triangles."""


class EmptyMaskError(DegenerateGeometryError):
    """An operation that needs at least one mask pixel got none."""


class DegenerateContactError(DegenerateGeometryError):
    """Object mask spans fewer than 3 columns; no contact edge exists."""


class DegenerateKeypointsError(DegenerateGeometryError):
    """Keypoint triple has coincident points; distance sums are zero."""


class DegenerateBoxError(DegenerateGeometryError):
    """Bounding box with zero height; aspect ratio undefined."""


class ParameterError(InputError):
    """Primitive or config parameter outside its documented range."""


class BehindCameraError(MeshMendError):
    """Projection requested for a point at or behind the camera plane."""


class InvalidDepthError(MeshMendError):
    """Unprojection requested with non-positive depth."""


class MatchingError(MeshMendError):
    """View or keypoint matching could not produce a solution."""


class NoCandidateError(MatchingError):
    """Every candidate view rendered empty; nothing to match."""


class MissingSupportDepthError(MatchingError):
    """No valid support-surface depth found below a contact keypoint."""


class KeypointOffMeshError(MatchingError):
    """A contact keypoint maps too far from the rendered mesh silhouette."""


class FrustumError(MeshMendError):
    """Scene sampling failed to keep the object inside the camera frustum."""


class EmptyEvaluationError(MeshMendError):
    """Metric evaluation selected zero pixels or zero scenes."""


class OutputError(MeshMendError):
    """Artifacts could not be written."""


class PipelineStageError(MeshMendError):
    """Wraps a stage failure with the stage name for end-to-end runs."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
