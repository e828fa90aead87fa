"""Anonymous no-login chat room: long-poll delivery, append-only history."""

__version__ = "0.1.0"
