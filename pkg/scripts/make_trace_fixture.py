"""Regenerate the shipped FCC-style trace fixture.

100 users: 90 with loss ratio below 0.1, 76 above 2 Mbps, 51 above 8 Mbps.
About a third of the users have two measurement rows whose per-row loss
ratios and throughputs average to the user's target.  Two malformed rows are
appended to exercise the skip path.
"""

import csv
import sys
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "lossfl" / "fixtures" / "fcc_fixture.csv"


def main(path=OUT):
    rng = np.random.default_rng(20190601)
    n = 100
    # loss ratios in thousandths so two-row splits stay exact
    loss_milli = np.concatenate([rng.integers(5, 95, 90), rng.integers(120, 400, 10)])
    speeds = np.concatenate([
        rng.uniform(0.3, 1.9, 24), rng.uniform(2.2, 7.8, 25), rng.uniform(8.5, 40.0, 51),
    ]).round(2)
    rng.shuffle(loss_milli)
    rng.shuffle(speeds)
    rows = []
    for i in range(n):
        uid = f"u{i:03d}"
        lm, sp = int(loss_milli[i]), float(speeds[i])
        if i % 3 == 0 and lm >= 5:
            # two rows of 1000 packets, ratios lm-d and lm+d, speeds sp-e and sp+e
            d, e = min(4, lm - 1), round(min(0.1, sp / 4), 2)
            rows.append([uid, 1000 - (lm - d), lm - d, round(sp - e, 2)])
            rows.append([uid, 1000 - (lm + d), lm + d, round(sp + e, 2)])
        else:
            rows.append([uid, 1000 - lm, lm, sp])
    rows.append(["u900", 0, 0, 5.0])
    rows.append(["u901", "n/a", 3, 5.0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "packets_received", "packets_lost", "throughput_mbps"])
        w.writerows(rows)
    return path


if __name__ == "__main__":
    print(main(Path(sys.argv[1]) if len(sys.argv) > 1 else OUT))
