"""Exception types shared across the pipeline."""


class EvifuseError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(EvifuseError):
    """Bad configuration or bad arguments at a stage boundary."""


class IngestionError(EvifuseError):
    """Malformed input data (corpus, notes, dictionary, judgments)."""


class ExcludedNoteError(IngestionError):
    """Raised when a note contains none of the canonical sections."""

    def __init__(self, note_id: str):
        self.note_id = note_id
        super().__init__(f"note {note_id!r} contains no canonical section and is excluded")


class DuplicateDocumentError(IngestionError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate doc_id {doc_id!r} in corpus")


class EmptyIndexError(EvifuseError):
    """An outcome filter retained zero documents; retrieval would be meaningless."""


class StorageError(EvifuseError):
    """Artifact file cannot be read or fails integrity checks."""


class VersionMismatchError(StorageError):
    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"artifact format_version {found} does not match reader version {expected}")


class ChecksumError(StorageError):
    def __init__(self, path: str):
        super().__init__(f"checksum mismatch in {path}: file is corrupt")


class ProviderError(EvifuseError):
    """A provider (embedder or pair scorer) violated the wire protocol or is unreachable."""
