# main.py

from cli import cli
from database import init_db
from logger import logger


def main():
    # The run registry must exist before any command records into it
    init_db()
    logger.debug("Run registry ready")

    cli(prog_name="titan")


if __name__ == "__main__":
    main()
