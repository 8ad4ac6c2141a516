"""Hierarquia de erros com códigos de saída da CLI."""
from pathlib import Path


class CCWError(Exception):
    """Erro base do toolkit."""

    exit_code: int = 1


class ConfigError(CCWError, ValueError):
    """Configuração inválida ou inconsistente."""

    exit_code = 2


class DataError(CCWError, ValueError):
    """Dados de entrada inválidos."""

    exit_code = 3


class DatasetParseError(DataError):
    """Linha malformada em arquivo de interações."""

    def __init__(self, path: str | Path, line_number: int, reason: str):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{self.path}:{line_number}: {reason}")


class ClusteringMismatchError(DataError):
    """Checkpoint treinado com outro arquivo de clusters."""

    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(
            f"Clustering do checkpoint ({expected[:12]}) difere do arquivo fornecido ({found[:12]})"
        )


class NumericError(CCWError, ArithmeticError):
    """Falha numérica (loss não finita, SVD sem convergência)."""

    exit_code = 4


class StageError(CCWError):
    """Falha em um estágio do pipeline."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code_for(cause)
        super().__init__(f"Estágio '{stage}' falhou: {cause}")


def exit_code_for(error: BaseException) -> int:
    """Mapeia uma exceção para o código de saída da CLI."""
    if isinstance(error, CCWError):
        return error.exit_code
    if isinstance(error, (FileNotFoundError, IsADirectoryError, UnicodeError)):
        return DataError.exit_code
    if isinstance(error, ValueError):
        # inclui pydantic.ValidationError
        return ConfigError.exit_code
    if isinstance(error, ArithmeticError):
        return NumericError.exit_code
    return 1
