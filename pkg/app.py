"""
Launcher for CODReg.

Thin entry point: argument parsing, logging and exit statuses live in the
`cli` package, the commands themselves in `cli.commands`.
"""
import sys

from cli import main


if __name__ == '__main__':
    sys.exit(main())
