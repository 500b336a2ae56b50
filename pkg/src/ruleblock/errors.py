"""Exception types shared across the package."""


class RuleBlockError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(RuleBlockError):
    """Malformed schema: duplicate attributes, unknown eid column, ..."""


class DataParseError(RuleBlockError):
    """Malformed input data (ragged CSV row, unreadable file, ...)."""


class RuleParseError(RuleBlockError):
    """Malformed rule document."""


class ValidationError(RuleBlockError):
    """Rule set does not fit the schema it is evaluated against."""


class ConfigError(RuleBlockError):
    """Invalid engine/pipeline configuration or unregistered measure."""
