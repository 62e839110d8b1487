import sys

from src.cli import cli
from src.log_config import setup_logging


def main():
    try:
        cli(prog_name="charlier")
    except KeyboardInterrupt:
        print("\n[INFO] Interrupted. Exiting.", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    setup_logging()
    main()
