"""Run orchestration, ledgers, reports."""
from .config import BackendConfig, RunConfig, derive_seeds, load_config, validate_config, with_overrides
from .ledger import LedgerHeader, LedgerRecord, LedgerWriter, read_records, scan_ledger
from .report import Report, SeedSummary, emit_report, report_from_ledgers
from .runner import OutdirLock, build_context, ledger_path, resume, run, run_seed

__all__ = [
    "BackendConfig", "RunConfig", "derive_seeds", "load_config", "validate_config",
    "with_overrides", "LedgerHeader", "LedgerRecord", "LedgerWriter", "read_records",
    "scan_ledger", "Report", "SeedSummary", "emit_report", "report_from_ledgers",
    "OutdirLock", "build_context", "ledger_path", "resume", "run", "run_seed",
]
