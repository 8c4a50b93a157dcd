class SdnsecError(Exception):
    """Base class for every error raised by the toolkit."""


class CatalogSchemaError(SdnsecError):
    def __init__(self, message: str, field: str | None = None, record_id: str | None = None):
        self.field = field
        self.record_id = record_id
        where = []
        if record_id:
            where.append(f"record '{record_id}'")
        if field:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")


class DanglingReferenceError(SdnsecError):
    def __init__(self, source_id: str, target_id: str, relation: str = "references"):
        self.source_id = source_id
        self.target_id = target_id
        super().__init__(f"'{source_id}' {relation} '{target_id}', which does not exist in the catalog.")


class DuplicateIdError(SdnsecError):
    def __init__(self, record_id: str, section: str):
        self.record_id = record_id
        super().__init__(f"Duplicate id '{record_id}' in section '{section}'.")


class UnknownIdError(SdnsecError, KeyError):
    def __init__(self, record_id: str, kind: str = "record"):
        self.record_id = record_id
        SdnsecError.__init__(self, f"Unknown {kind} id '{record_id}'.")

    def __str__(self) -> str:
        return self.args[0]


class HardeningError(SdnsecError):
    def __init__(self, message: str, alternatives: tuple[str, ...] = ()):
        self.alternatives = alternatives
        super().__init__(message)


class TopologyError(SdnsecError):
    pass


class SimulationError(SdnsecError):
    pass


class ScenarioError(SdnsecError):
    def __init__(self, message: str, unmapped_ranks: tuple[int, ...] = ()):
        self.unmapped_ranks = unmapped_ranks
        super().__init__(message)
