"""Network front-end: auth against the weak-credential policy, shell bridging, egress."""
from __future__ import annotations

from .core import AuthResult, Sensor, SensorError, ShellSession
from .plain import PlainServer
from .policy import Account, AllowWindow, CredentialPolicy, EgressPolicy, PolicyError

__all__ = [
    "AuthResult", "Sensor", "SensorError", "ShellSession", "PlainServer", "Account", "AllowWindow",
    "CredentialPolicy", "EgressPolicy", "PolicyError",
]
