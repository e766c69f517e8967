import sys

from aoisim.cli import main

sys.exit(main())
