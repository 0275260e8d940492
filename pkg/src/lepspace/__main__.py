import sys  # pragma nocover

from lepspace.runner import run  # pragma nocover

sys.exit(run())  # pragma nocover
