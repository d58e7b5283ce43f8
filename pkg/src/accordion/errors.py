"""Exception hierarchy. Every error is a ``ValueError`` so callers can catch broadly."""


class AccordionError(ValueError):
    pass


class StructuralError(AccordionError):
    """Layer shapes do not compose, or a tensor does not fit its layer."""


class CodecError(AccordionError):
    """A chromosome cannot be mapped back onto a network."""

    def __init__(self, message, gene_index=None):
        super().__init__(message)
        self.gene_index = gene_index


class ContractError(AccordionError):
    """An operation was called outside its preconditions."""


class FormatError(AccordionError):
    """A dataset or checkpoint file is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(AccordionError):
    """A run configuration document is invalid."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
