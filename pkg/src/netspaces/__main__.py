import sys

from netspaces.cli import main

sys.exit(main())
