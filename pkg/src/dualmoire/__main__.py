import sys

from dualmoire.cli import main

sys.exit(main())
