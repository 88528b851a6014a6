import sys

from mtcert.cli import main

sys.exit(main())
