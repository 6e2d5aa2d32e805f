import sys

from nepec.cli import main

sys.exit(main())
