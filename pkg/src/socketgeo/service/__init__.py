from .app import create_app
from .storage import Case, CaseStore, NotFound, effective_findings

__all__ = ["create_app", "Case", "CaseStore", "NotFound", "effective_findings"]
