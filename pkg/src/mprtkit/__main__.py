import sys

from mprtkit.cli import main

sys.exit(main())
