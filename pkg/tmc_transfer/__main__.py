import sys

from tmc_transfer.cli import main

if __name__ == "__main__":
    sys.exit(main())
