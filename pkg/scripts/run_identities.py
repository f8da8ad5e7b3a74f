#!/usr/bin/env python3
"""Identity suite at a fixed seed: refinement ratios for the trace and
energy identities, the two-route xi computation, the 3D/split
equivalence, and the subharmonicity inequality scan.

    python scripts/run_identities.py [seed] [outdir]
"""

import sys

from ebelab.cli import main

if __name__ == "__main__":
    seed = sys.argv[1] if len(sys.argv) > 1 else "7"
    outdir = sys.argv[2] if len(sys.argv) > 2 else "runs/identities"
    sys.exit(main(["identities", "--set", f"seed={seed}",
                   "--set", f"outdir={outdir}"]))
