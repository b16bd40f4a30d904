"""``python -m ptsne``."""
import sys

from .cli import main

sys.exit(main())
