"""Exception types shared across the package."""


class EcoDriveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EcoDriveError):
    """Invalid layer, network, scenario, or experiment configuration."""


class StateError(EcoDriveError):
    """Operation called in an invalid order (e.g. backward before forward)."""


class TrainingError(EcoDriveError):
    """Non-finite loss or gradient encountered during optimization."""


class CollisionFault(EcoDriveError):
    """Two vehicles overlap; carries both vehicle ids."""

    def __init__(self, vehicle_a: int, vehicle_b: int, t: float):
        self.vehicle_a = vehicle_a
        self.vehicle_b = vehicle_b
        self.t = t
        super().__init__(f"collision between vehicles {vehicle_a} and {vehicle_b} at t={t}")


class UsageError(EcoDriveError):
    """Bad command-line or experiment configuration input."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message)
