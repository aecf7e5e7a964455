"""Exception taxonomy. CLI maps ConfigError to exit 2 and ScorerError to exit 3."""


class AudiocertError(Exception):
    """Base class for package errors."""


class ConfigError(AudiocertError):
    """Bad job file, bad override, bad manifest, or inconsistent budget."""


class AudioFormatError(AudiocertError):
    """Unsupported or corrupt audio file."""


class AssetError(AudiocertError):
    """Noise/RIR asset bank problem (empty manifest, unreadable file, silent asset)."""


class InvalidScoresError(AudiocertError):
    """Score matrix outside [0, 1], non-finite, or shaped inconsistently with the budget."""


class ScorerError(AudiocertError):
    """Scorer backend failure: bridge protocol violation, timeout, or child death.

    Carries enough context to debug a misbehaving child process.
    """

    def __init__(self, message, *, payload=None):
        super().__init__(message)
        self.payload = payload
