# defaultlab/__main__.py
import sys

from defaultlab.main import main

if __name__ == "__main__":
    sys.exit(main())
