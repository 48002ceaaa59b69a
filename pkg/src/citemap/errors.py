"""Exception types shared across the package.

The command line front end maps these onto process exit codes:
validation problems exit 1, missing upstream artifacts exit 2, and
anything else exits 3.
"""


class CitemapError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CitemapError):
    """Invalid input data, configuration, or argument combination."""


class MissingArtifactError(CitemapError):
    """A pipeline stage requires a file that an earlier stage has not produced."""
