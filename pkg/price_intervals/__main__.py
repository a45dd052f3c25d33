import sys

from price_intervals.cli import main

sys.exit(main())
