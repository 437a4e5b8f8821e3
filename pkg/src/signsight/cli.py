"""Command-line entry point: ``evaluate``, ``gen-synthetic`` and ``validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import SignSightError, ValidationError
from .io import load_scene
from .pipeline import evaluate
from .report import write_reports
from .synthetic import generate_from_file

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="signsight", description="Timely visual recognizability of traffic signs "
                                                "from annotated road point clouds.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("evaluate", help="evaluate every sign in a scene manifest")
    ev.add_argument("manifest")
    ev.add_argument("-o", "--output", required=True, help="output directory")
    ev.add_argument("--export-field", action="store_true", help="also write field.csv")
    ev.add_argument("--params", help="key=value file overriding model parameters")
    ev.add_argument("--library", help="sign library directory")
    ev.add_argument("--jobs", type=int, default=1, help="signs evaluated concurrently")

    gen = sub.add_parser("gen-synthetic", help="generate a synthetic scene from a spec file")
    gen.add_argument("spec")
    gen.add_argument("-o", "--output", required=True, help="output directory")

    va = sub.add_parser("validate", help="load and check a scene manifest")
    va.add_argument("manifest")
    va.add_argument("--params", help="key=value file overriding model parameters")
    va.add_argument("--library", help="sign library directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-synthetic":
            manifest = generate_from_file(args.spec, args.output)
            print(f"wrote {manifest}")
            return EXIT_OK
        scene = load_scene(args.manifest, args.params, args.library)
        if args.command == "validate":
            print(f"{args.manifest}: ok, {len(scene.signs)} sign(s), "
                  f"{len(scene.environment)} environment points")
            return EXIT_OK
        if args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        results = evaluate(scene, jobs=args.jobs)
        paths = write_reports(args.output, results, args.export_field)
        failed = [r for r in results if not r.ok]
        for r in failed:
            print(f"sign {r.sign_id} failed: {r.error}", file=sys.stderr)
        print("wrote " + ", ".join(str(p) for p in paths))
        return EXIT_RUNTIME if failed else EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SignSightError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
