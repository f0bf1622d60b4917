"""Allow `python -m pyrewatch`."""

import sys

from .cli import main

sys.exit(main())
