"""hipot: SSH honeypot sensor with terminal-layer capture and an offline forensics pipeline."""

__version__ = "0.1.0"
LOG_FORMAT = "hipot-log v1"
LOG_VERSION = 1
