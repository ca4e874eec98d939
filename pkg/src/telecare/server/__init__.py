from .alerts import ALERT_KINDS, Alert, AlertEngine, Invalid, Prescription
from .app import create_app
from .store import Conflict, CorruptLog, NotFound, Store

__all__ = [
    "ALERT_KINDS",
    "Alert",
    "AlertEngine",
    "Invalid",
    "Prescription",
    "create_app",
    "Conflict",
    "CorruptLog",
    "NotFound",
    "Store",
]
