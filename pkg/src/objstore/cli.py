"""``objstore`` command line: run one configuration or sweep one axis."""
from __future__ import annotations

import argparse
import sys

from .fabric import DeadlockError
from .harness import load_config, run_experiment, sweep, to_csv
from .ids import CapacityError
from .lom import CacheStarvation, DanglingReference
from .storage import ProtocolError

# failures that mean the run itself is invalid, reported with exit code 2
RUN_ERRORS = (DeadlockError, ProtocolError, CacheStarvation, DanglingReference,
              CapacityError, AssertionError, RuntimeError)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="objstore", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="key=value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field (repeatable)")
        sp.add_argument("--out", help="write CSV here instead of stdout")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    sw = sub.add_parser("sweep", help="run the config once per value of one field")
    common(sw)
    sw.add_argument("--axis", required=True)
    sw.add_argument("--values", required=True, help="comma separated")
    sw.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"objstore: bad configuration: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            rows = run_experiment(cfg).rows
        else:
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows = sweep(cfg, args.axis, values, jobs=args.jobs)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"objstore: bad configuration: {exc}", file=sys.stderr)
        return 1
    except RUN_ERRORS as exc:
        print(f"objstore: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    text = to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
