"""Hierarquia de erros do vesseltree e os códigos de saída da linha de comando."""

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


class VesselTreeError(Exception):
    """Base de todos os erros do pacote. Cada subclasse define o código de saída do CLI."""
    exit_code = EXIT_NUMERICAL


class InputError(VesselTreeError):
    exit_code = EXIT_INPUT


class DomainError(InputError):
    """Posição fora do domínio da grade."""


class EmptyInputError(InputError):
    """Nenhum dado utilizável (ex.: nenhuma trajetória com velocidade não nula)."""


class ConfigError(VesselTreeError):
    exit_code = EXIT_CONFIG


class NumericalError(VesselTreeError):
    exit_code = EXIT_NUMERICAL


class BacktrackStallError(NumericalError):
    """The descent towards the seed stopped before reaching it."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = tuple(float(v) for v in point)


class InfeasibleClusterError(NumericalError):
    """A cluster contains a pair of nodes with infinite geodesic distance."""

    def __init__(self, message, pair):
        super().__init__(message)
        self.pair = tuple(int(v) for v in pair)


class StageError(VesselTreeError):
    """Wraps a failure of one pipeline stage, keeping the stage tag for the report."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', EXIT_NUMERICAL)
