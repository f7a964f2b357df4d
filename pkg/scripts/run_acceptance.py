"""Run acceptance criteria and write a JSON report.

    python3 scripts/run_acceptance.py                 # all of A1..A13
    python3 scripts/run_acceptance.py --only A4,A7    # a subset
"""

import argparse
import json
import sys
from pathlib import Path

from graphflow.suites import SuiteContext, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--only", default="acceptance", help="suite name, criterion id or comma list")
    ap.add_argument("--json", default="acceptance.json", help="report path")
    args = ap.parse_args()

    def report(res):
        print(f"{res.line()}  [{res.seconds:.1f}s]", flush=True)

    results = run_suite(args.only, SuiteContext(), report)
    Path(args.json).write_text(json.dumps([r.as_dict() for r in results], indent=2) + "\n")
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed; report in {args.json}")
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
