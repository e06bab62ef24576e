import os
import logging
import uuid
import pandas as pd
from datetime import datetime
from typing import Dict, Any, Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

RUN_LOG_COLUMNS = [
    'run_id',
    'timestamp',
    'command',
    'dataset',
    'n',
    'level',
    'result',
    'exact',
    'elapsed',
    'successful'
]


def configure_logging(level: int = logging.WARNING) -> None:
    """
    Configure root logging for the command-line tool.

    Log records go to stderr so that command output on stdout stays
    byte-stable between runs.

    Args:
        level: Numeric logging level
    """
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def initialize_log_file(log_file_path: str) -> None:
    """
    Initialize the run ledger with column headers if it doesn't exist.

    Args:
        log_file_path: Path to the ledger CSV file
    """
    if not os.path.exists(log_file_path):
        directory = os.path.dirname(log_file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        log_df = pd.DataFrame(columns=RUN_LOG_COLUMNS)
        log_df.to_csv(log_file_path, index=False)
        logger.info(f"Initialized run ledger at {log_file_path}")
    else:
        logger.debug(f"Run ledger already exists at {log_file_path}")


def log_run(
    log_file_path: str,
    command: str,
    dataset: Optional[str] = None,
    n: Optional[int] = None,
    level: Optional[str] = None,
    result: Any = None,
    exact: bool = True,
    elapsed: float = 0.0,
    successful: bool = True
) -> bool:
    """
    Append one CLI run to the run ledger.

    Args:
        log_file_path: Path to the ledger CSV file
        command: Subcommand name
        dataset: Dataset name, if the command used one
        n: Atom count, if the command used one
        level: Constraint level, if the command used one
        result: Headline result (a count, an objective value, ...)
        exact: False when the result is a partial, budget-limited value
        elapsed: Wall time in seconds
        successful: Whether the command finished with exit code 0

    Returns:
        Boolean indicating if logging was successful
    """
    try:
        initialize_log_file(log_file_path)
        entry = {
            'run_id': str(uuid.uuid4()),
            'timestamp': datetime.now().isoformat(),
            'command': command,
            'dataset': dataset,
            'n': n,
            'level': level,
            'result': result,
            'exact': exact,
            'elapsed': elapsed,
            'successful': successful
        }
        pd.DataFrame([entry], columns=RUN_LOG_COLUMNS).to_csv(
            log_file_path, mode='a', header=False, index=False
        )
        logger.debug(f"Logged {command} run to {log_file_path}")
        return True

    except Exception as e:
        logger.error(f"Error logging run: {str(e)}")
        return False


def load_log_data(log_file_path: str) -> pd.DataFrame:
    """
    Load the run ledger.

    Args:
        log_file_path: Path to the ledger CSV file

    Returns:
        DataFrame with one row per logged run (empty if the ledger is missing)
    """
    if not os.path.exists(log_file_path):
        logger.warning(f"Run ledger not found at {log_file_path}")
        return pd.DataFrame(columns=RUN_LOG_COLUMNS)

    try:
        return pd.read_csv(log_file_path)
    except Exception as e:
        logger.error(f"Error loading run ledger: {str(e)}")
        return pd.DataFrame(columns=RUN_LOG_COLUMNS)


def get_run_statistics(log_file_path: str) -> Dict[str, Any]:
    """
    Summarize the run ledger.

    Args:
        log_file_path: Path to the ledger CSV file

    Returns:
        Dictionary with total/successful/partial run counts, mean elapsed
        time and runs per command
    """
    log_df = load_log_data(log_file_path)

    empty = {
        'total_runs': 0,
        'successful_runs': 0,
        'partial_runs': 0,
        'average_elapsed': 0.0,
        'runs_per_command': {}
    }
    if log_df.empty:
        return empty

    try:
        successful = log_df['successful'].astype(str).str.lower() == 'true'
        exact = log_df['exact'].astype(str).str.lower() == 'true'
        return {
            'total_runs': int(len(log_df)),
            'successful_runs': int(successful.sum()),
            'partial_runs': int((~exact).sum()),
            'average_elapsed': float(log_df['elapsed'].astype(float).mean()),
            'runs_per_command': {str(k): int(v) for k, v in log_df['command'].value_counts().items()}
        }
    except Exception as e:
        logger.error(f"Error generating run statistics: {str(e)}")
        return empty
