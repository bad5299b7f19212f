"""Critical and oscillatory N=13 open chains learned at D=4 from 30000 samples.

Each preset writes a full report directory (loss trace, fidelity trace,
correlations, histograms) under runs/showcase/<preset>.
"""

import json
import sys
from pathlib import Path

from bornxy import cli

if __name__ == "__main__":
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/showcase")
    for preset in ("critical", "oscillatory"):
        out = root / preset
        code = cli.main(["report", "--preset", preset, "--bond-dim", "4", "--samples", "30000", "--out", str(out)])
        if code:
            sys.exit(code)
        report = json.loads((out / "report.json").read_text())
        print(f"{preset}: F = {report['fidelity']:.4f}  NLL - S = {report['final_loss'] - report['entropy']:.4f}")
