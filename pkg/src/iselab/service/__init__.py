"""Session service: event-sourced experiment state behind an HTTP API."""

from iselab.service.flow import SessionRecord, fold_events, snapshot_dict
from iselab.service.store import SessionStore
from iselab.service.app import create_app

__all__ = ["SessionRecord", "SessionStore", "create_app", "fold_events",
           "snapshot_dict"]
