import sys

from ssfeedback.harness.cli import main

sys.exit(main())
