import sys

from nkgame.cli import main

sys.exit(main())
