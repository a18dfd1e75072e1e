"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AgentIndexError(Exception):
    """Base class for all errors raised by agentindex."""


class InvalidSeed(AgentIndexError, ValueError):
    pass


class InvalidKey(AgentIndexError, ValueError):
    pass


class InvalidCapabilityPath(AgentIndexError, ValueError):
    pass


class DecodeError(AgentIndexError, ValueError):
    """Raised when a binary encoding is truncated or malformed."""


class RecordValidationError(AgentIndexError, ValueError):
    """A record failed one or more invariants; ``issues`` lists all of them."""

    def __init__(self, issues):
        self.issues = tuple(issues)
        names = ", ".join(i.value for i in self.issues)
        super().__init__(f"record invalid: {names}")


class NotOwner(AgentIndexError):
    """The supplied key pair does not own the record or chain."""


class InvalidWindow(AgentIndexError, ValueError):
    pass


class StaleVersion(AgentIndexError):
    pass


class NotFound(AgentIndexError, LookupError):
    pass


class PushUnavailable(AgentIndexError):
    pass


class MergeDomainError(AgentIndexError, ValueError):
    pass


class EmptyNetwork(AgentIndexError):
    pass


class PolicyDenied(AgentIndexError):
    pass


class RpcTimeout(AgentIndexError):
    pass


class ConfigError(AgentIndexError, ValueError):
    """Scenario configuration is invalid; ``violations`` holds one line per problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))
