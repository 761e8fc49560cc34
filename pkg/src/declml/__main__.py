import sys

from declml.cli import main

sys.exit(main())
