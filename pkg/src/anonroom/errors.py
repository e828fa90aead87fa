"""Error hierarchy shared by the domain, store, and HTTP layers.

Every error carries the wire error code (the class's ``code``) and the HTTP
status it maps to, so the server layer can render ``{"error": CODE,
"detail": ...}`` without a separate lookup table.
"""


class ChatError(Exception):
    code = "ChatError"
    http_status = 500

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


# -- 400: request validation ------------------------------------------------

class InvalidRequest(ChatError):
    code = "InvalidRequest"
    http_status = 400


class EmptyMessage(ChatError):
    code = "EmptyMessage"
    http_status = 400


class MessageTooLong(ChatError):
    code = "MessageTooLong"
    http_status = 400


class InvalidText(ChatError):
    code = "InvalidText"
    http_status = 400


class InvalidDisplayName(ChatError):
    code = "InvalidDisplayName"
    http_status = 400


class InvalidStatus(ChatError):
    code = "InvalidStatus"
    http_status = 400


class SelfScope(ChatError):
    code = "SelfScope"
    http_status = 400


# -- auth / authorization ----------------------------------------------------

class BadToken(ChatError):
    code = "BadToken"
    http_status = 401


class NotAuthorized(ChatError):
    code = "NotAuthorized"
    http_status = 403


class NotGroupMember(ChatError):
    code = "NotGroupMember"
    http_status = 403


class SessionExpired(ChatError):
    code = "SessionExpired"
    http_status = 410


# -- missing referents -------------------------------------------------------

class UnknownGroup(ChatError):
    code = "UnknownGroup"
    http_status = 404


class UnknownRecipient(ChatError):
    code = "UnknownRecipient"
    http_status = 404


class UnknownHandle(ChatError):
    code = "UnknownHandle"
    http_status = 404


# -- protocol / state --------------------------------------------------------

class CursorAhead(ChatError):
    code = "CursorAhead"
    http_status = 409


class HandleSpaceExhausted(ChatError):
    code = "HandleSpaceExhausted"
    http_status = 500


# -- persistence ---------------------------------------------------------------

class StorageFailure(ChatError):
    code = "StorageFailure"
    http_status = 500


class CorruptLog(ChatError):
    code = "CorruptLog"
    http_status = 500
