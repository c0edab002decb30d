"""Campaign runner and command-line front end."""

from .campaign import (
    PHASE_COLUMNS,
    WAIT_COLUMNS,
    Campaign,
    CampaignError,
    PointResult,
    RunRecord,
    phase_rows,
    read_table,
    run_campaign,
    wait_rows,
    write_table,
)
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .main import main, naive_baseline

__all__ = [
    "PHASE_COLUMNS",
    "WAIT_COLUMNS",
    "Campaign",
    "CampaignError",
    "ConfigError",
    "PointResult",
    "RunRecord",
    "ScenarioConfig",
    "load_config",
    "main",
    "naive_baseline",
    "parse_config",
    "phase_rows",
    "read_table",
    "run_campaign",
    "wait_rows",
    "write_table",
]
