"""Root logging for the command line.

Three handlers are installed on the root logger: the per-run log, an
appended debug log and WARNING on stderr. Library modules only log.
"""
import logging
import os

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
RUN_LOG_NAME = 'charlier.log'
DEBUG_LOG_NAME = 'charlier-debug.log'
HANDLER_NAMES = ('charlier-run', 'charlier-debug', 'charlier-console')


def _named(handler, name, level):
    handler.set_name(name)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return handler


def setup_logging(log_dir=None):
    """Installs the charlier handlers, replacing those of an earlier call.

    Args:
        log_dir (str): Directory of the two log files, the project root by default.
    """
    log_dir = log_dir or os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    root = logging.getLogger()
    for handler in root.handlers[:]:
        if handler.get_name() in HANDLER_NAMES:
            root.removeHandler(handler)
            handler.close()

    run_path = os.path.join(log_dir, RUN_LOG_NAME)
    debug_path = os.path.join(log_dir, DEBUG_LOG_NAME)
    handlers = (
        _named(logging.FileHandler(run_path, mode='w', encoding='utf-8'), 'charlier-run', logging.INFO),
        _named(logging.FileHandler(debug_path, mode='a', encoding='utf-8'), 'charlier-debug', logging.DEBUG),
        _named(logging.StreamHandler(), 'charlier-console', logging.WARNING),
    )
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(logging.DEBUG)
    logging.debug(f"Logging to {run_path} and {debug_path}")
