"""Boundary x bond-dimension fidelity grid at N=13 with |T|=10000.

Extra arguments pass straight through to ``bornxy table1``, e.g.
``--repeats 3 --threads 4`` or ``--sites 16`` for the slower opt-in sizes.
"""

import sys

from bornxy import cli

if __name__ == "__main__":
    sys.exit(cli.main(["table1", "--samples", "10000", "--out", "runs/table1", *sys.argv[1:]]))
