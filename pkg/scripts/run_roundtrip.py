#!/usr/bin/env python3
"""End-to-end round trip on a preset: build, flow, scatter, extract,
compare against the input types.

    python scripts/run_roundtrip.py [preset] [outdir]
"""

import sys

from ebelab.cli import main

if __name__ == "__main__":
    preset = sys.argv[1] if len(sys.argv) > 1 else "rank2_k01"
    outdir = sys.argv[2] if len(sys.argv) > 2 else f"runs/roundtrip_{preset}"
    sys.exit(main(["roundtrip", "--preset", preset,
                   "--set", f"outdir={outdir}"]))
