"""Run every shipped preset at full scale into one results directory.

    python3 scripts/reproduce_presets.py --out results --jobs 4 [--rounds 200] [--only fig3 table2]
"""

import argparse
import sys
import time

from lossfl.cli import main as cli_main, preset_files


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--only", nargs="*", default=None)
    args = p.parse_args(argv)
    names = args.only or sorted(preset_files())
    for name in names:
        cmd = ["matrix", "--config", name, "--out", f"{args.out}/{name}", "--jobs", str(args.jobs)]
        if args.rounds is not None:
            cmd += ["--rounds", str(args.rounds)]
        if args.seed is not None:
            cmd += ["--seed", str(args.seed)]
        t0 = time.perf_counter()
        code = cli_main(cmd)
        print(f"{name}: exit {code} in {time.perf_counter() - t0:.0f} s", flush=True)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
