"""
Jerarquía de errores de TQx.

Las violaciones de precondición heredan de ``ValueError`` (igual que las
validaciones de los servicios), así la CLI puede distinguirlas de las fallas
de ejecución.
"""


class TqxError(Exception):
    """Error base de TQx"""


class ValidationError(TqxError, ValueError):
    """Entrada inválida: se reporta con código de salida 2"""


class ZeroRowError(ValidationError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"La fila {row} tiene norma cero y no se puede normalizar")


class DimensionMismatchError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class MalformedRecordError(ValidationError):
    def __init__(self, index, reason):
        self.index = index
        self.reason = reason
        super().__init__(f"Registro {index} inválido: {reason}")


class EmptyResultError(ValidationError):
    pass


class PoolEmbeddingMismatchError(ValidationError):
    pass


class KTooLargeError(ValidationError):
    pass


class SingleClusterError(ValidationError):
    pass


class KClassMismatchError(ValidationError):
    pass


class BatchTooSmallError(ValidationError):
    pass


class MissingClassInTrainError(ValidationError):
    pass


class UndefinedAccCError(ValidationError):
    pass


class InfeasibleMarginError(ValidationError):
    pass


class MissingIdsError(ValidationError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"El proveedor no devolvió los ids: {', '.join(self.ids)}")


class ConfigError(ValidationError):
    pass


class NonFiniteGradientError(TqxError):
    pass


class ProviderError(TqxError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(f"Error del proveedor de embeddings (status={status}) {message}".strip())


class StageError(TqxError):
    """Falla de una etapa de la corrida; conserva el error original"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Falló la etapa '{stage}': {cause}")
