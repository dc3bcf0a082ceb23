from .config import ConfigError, ExperimentConfig, load_config, parse_config, resolve_params
from .replay import (LoggedDataset, ReplayError, ReplayResult, load_logged_csv, replay_logged,
                     synthesize_logged_dataset, write_logged_csv)
from .sweep import cells, lp_summary, run_cell, run_sweep, trial_seed
