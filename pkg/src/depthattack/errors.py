"""Exception hierarchy shared across the package."""


class DepthAttackError(Exception):
    """Base class for all errors raised by this package."""


class ImageFormatError(DepthAttackError):
    """The file exists but is not a PNG this package can decode."""


class UnsupportedBitDepthError(ImageFormatError):
    """The PNG decodes but its sample depth is not 8 bits per channel."""


class DimensionMismatchError(DepthAttackError):
    """Two rasters that must share a shape do not."""


class EmptyRegionError(DepthAttackError):
    """A region mask with no set pixels was used where the attack needs one."""


class SingularHomographyError(DepthAttackError):
    """A homography matrix is not invertible."""


class ConfigError(DepthAttackError):
    """Attack configuration failed validation.

    Carries the full list of problems so the operator can fix them all at
    once; no oracle query is issued before this is raised.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class OracleError(DepthAttackError):
    """Base class for failures at the depth-estimator boundary."""


class OracleConnectionError(OracleError):
    """The remote endpoint could not be reached after all retries."""


class MalformedResponseError(OracleError):
    """The remote endpoint answered with something off-protocol.

    The model did consume the query, so ledgers still count it.
    """

    counts_as_query = True


class RemoteModelError(OracleError):
    """The remote model reported an inference failure (HTTP 5xx).

    The model consumed the query, so ledgers still count it.
    """

    counts_as_query = True


class EvaluationError(DepthAttackError):
    """The evaluator failed for a candidate solution.

    ``genes`` holds the offending genotype so the failure is reproducible;
    ``partial`` may carry the search state reached before the abort.
    """

    def __init__(self, message: str, genes=None):
        self.genes = genes
        self.partial = None
        super().__init__(message)
