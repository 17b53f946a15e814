"""Entry point for python -m factor_mislearning"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
