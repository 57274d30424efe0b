"""Exception hierarchy shared by all dlbac modules."""


class DlbacError(Exception):
    """Base class for all dlbac errors."""


class ConfigError(DlbacError):
    """Invalid configuration value or combination."""


class SynthesisError(DlbacError):
    """Dataset synthesis could not satisfy a rule."""


class FormatError(DlbacError):
    """Malformed dataset / encoder / model / tree file."""


class IngestError(DlbacError):
    """Malformed CSV input."""


class NotFoundError(DlbacError):
    """Unknown user or resource id."""


class ConflictError(DlbacError):
    """Contradictory metadata for the same id."""
