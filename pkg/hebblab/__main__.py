# python imports
import sys

# local imports
from .cli import main

sys.exit(main())
