import sys

from autodsm.cli import main

sys.exit(main())
