import sys

from faultwave.cli import main

sys.exit(main())
