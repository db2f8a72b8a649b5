"""Exception types shared across the package."""


class TabnoiseError(Exception):
    """Base class for all package errors."""


class TableError(TabnoiseError):
    """Structural problem in tabular data: ragged rows, duplicate headers, bad cells."""


class ConfigError(TabnoiseError):
    """Invalid configuration: unknown categories, bad parameters, missing columns."""


class SchemaError(TabnoiseError):
    """Data passed for preparation does not cover the fitted schema."""


class SeedExhaustedError(TabnoiseError):
    """The entropy seed bank ran out and no extra seed generator is configured."""


class BasisFormatError(TabnoiseError):
    """A persisted basis file is unreadable or has an incompatible version."""
