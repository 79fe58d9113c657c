#!/usr/bin/env python3
"""Convert a downloaded Planetoid dataset (ind.<name>.*) to data/<name>.

Example:
    python3 scripts/convert_planetoid.py --name cora \
        --raw-dir ~/downloads/planetoid/data --out data/cora
"""

import sys

from dpgcn.planetoid import main

if __name__ == "__main__":
    sys.exit(main())
