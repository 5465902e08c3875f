class ConfigError(ValueError):
    """Invalid or unknown configuration value; the message names the key."""


class CheckpointError(ValueError):
    """Checkpoint is malformed, fails its checksum or has an unsupported version."""


class InsufficientBuffer(RuntimeError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message, timestep=None):
        super().__init__(message)
        self.timestep = timestep
