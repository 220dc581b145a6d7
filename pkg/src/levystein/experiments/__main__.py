import sys

from levystein.experiments.cli import main

sys.exit(main())
