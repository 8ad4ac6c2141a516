"""Ponto de entrada do console script `ccw`."""
import sys

from app.cli.main import run


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
