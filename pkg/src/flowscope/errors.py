"""Exception hierarchy.

Every error carries a module-qualified ``code`` (``"ingest.SchemaViolation"``)
so the CLI can surface it as machine-readable JSON.
"""

from __future__ import annotations


class FlowscopeError(Exception):
    module = "flowscope"

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


# ingest
class IngestError(FlowscopeError):
    module = "ingest"


class MissingFile(IngestError):
    def __init__(self, path):
        super().__init__(f"missing input file: {path}")
        self.path = str(path)


class SchemaViolation(IngestError):
    def __init__(self, source: str, line: int, field: str, detail: str = ""):
        msg = f"{source}:{line}: invalid field {field!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.source = source
        self.line = line
        self.field = field

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(source=self.source, line=self.line, field=self.field)
        return d


class DanglingReference(IngestError):
    def __init__(self, tx_hash: str, detail: str = ""):
        super().__init__(f"dangling reference {tx_hash}" + (f": {detail}" if detail else ""))
        self.tx_hash = tx_hash


# revenue
class UnknownBlock(FlowscopeError):
    module = "revenue"

    def __init__(self, block_number: int):
        super().__init__(f"unknown block {block_number}")
        self.block_number = block_number


# exclusivity
class ExclusivityError(FlowscopeError):
    module = "exclusivity"


class EmptyEpoch(ExclusivityError):
    pass


class SupportViolation(ExclusivityError):
    pass


class DegenerateGroundTruth(ExclusivityError):
    pass


# dependency
class NoBlocks(FlowscopeError):
    module = "dependency"


# features
class UnknownContract(FlowscopeError):
    module = "features"


# forest
class ForestError(FlowscopeError):
    module = "forest"


class InsufficientData(ForestError):
    pass


class SingleClassData(ForestError):
    pass


class ForestFormatError(ForestError):
    pass


# concentration
class ConcentrationError(FlowscopeError):
    module = "concentration"


class EmptyPhase(ConcentrationError):
    pass


class ConstantSeries(ConcentrationError):
    pass


class InsufficientDays(ConcentrationError):
    pass


# tailfit
class InsufficientTail(FlowscopeError):
    module = "tailfit"


# synth
class InvalidConfig(FlowscopeError):
    module = "synth"
