import sys

from nestedkrig.cli import main

sys.exit(main())
