import sys

from quadvuln.cli import main

sys.exit(main())
