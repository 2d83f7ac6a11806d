"""Command-line entry point: ``dwgrad run|preset|presets|estimate|render``."""
import argparse
import json
import os
import sys

from . import __version__
from . import estimate as est
from .errors import ConfigError, NumericalError
from .presets import preset_text, presets
from .scenario import execute, parse_scenario, run_scenario
from .svg import render_svg

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _print_manifest(m):
    print(f"{m.name}: {len(m.files)} file(s) in {m.out_dir} (seed {m.seed}, sha256 {m.digest[:12]})")
    for f in m.files:
        print(f"  {f}")


def cmd_run(args):
    _print_manifest(run_scenario(args.config, out_dir=args.out, seed=args.seed))


def cmd_preset(args):
    text = preset_text(args.name)
    scenario = parse_scenario(text, source=f"preset:{args.name}", seed=args.seed)
    _print_manifest(execute(scenario, text.encode(), args.out))


def cmd_presets(args):
    for name in presets():
        print(name)


def cmd_estimate(args):
    samples = est.read_samples_csv(args.samples)
    calib = est.calibrate(samples) if not args.ideal else est.IDENTITY
    res = est.mle_fit(samples, calib, wrap=not args.no_wrap)
    if args.bootstrap:
        res = est.bootstrap(res, calib, samples.m, args.bootstrap, seed=args.seed,
                            wrap=not args.no_wrap)
    doc = res.to_document()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.json:
        res.write_json(args.json)
    print(text)
    if args.region:
        est.write_confidence_csv(args.region, est.confidence_region(res))


def cmd_render(args):
    out = args.output or os.path.splitext(args.csv)[0] + ".svg"
    render_svg(args.csv, args.plotspec, out)
    print(out)


def build_parser():
    p = argparse.ArgumentParser(prog="dwgrad", description=__doc__)
    p.add_argument("--version", action="version", version=f"dwgrad {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (default $DWGRAD_OUT/<name>)")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("preset", help="run a built-in scenario")
    pr.add_argument("name")
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_preset)

    ls = sub.add_parser("presets", help="list built-in scenarios")
    ls.set_defaults(func=cmd_presets)

    e = sub.add_parser("estimate", help="fit (dphi, sigma) to a shot_id,z1,z2 CSV")
    e.add_argument("samples")
    e.add_argument("--bootstrap", type=int, default=200, help="resamples (0 to skip)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--ideal", action="store_true", help="assume C = 0, V = 1")
    e.add_argument("--no-wrap", action="store_true", help="unwrapped Gaussian branches")
    e.add_argument("--json", default=None, help="also write the estimate document here")
    e.add_argument("--region", default=None, help="write 90%% confidence polylines CSV")
    e.set_defaults(func=cmd_estimate)

    rd = sub.add_parser("render", help="render a CSV table to SVG with a JSON plot spec")
    rd.add_argument("csv")
    rd.add_argument("plotspec")
    rd.add_argument("-o", "--output", default=None)
    rd.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"dwgrad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"dwgrad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
