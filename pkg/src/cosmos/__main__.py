import sys

from cosmos.cli import main

sys.exit(main())
