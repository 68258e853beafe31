import sys

from nomenflow.cli import main

sys.exit(main())
