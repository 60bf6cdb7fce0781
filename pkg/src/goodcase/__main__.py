import sys

from goodcase.cli import main

sys.exit(main())
