import sys

from sphereforge.cli import main

sys.exit(main())
