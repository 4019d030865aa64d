"""Command line entry point: ``mclt verify | rate-scan | stein-check | models list``."""

import argparse
import sys

from . import harness
from .errors import ConfigError, MCLTError, NumericalError
from .models import available_models, build_model

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FAILED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _run_args(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--model", help="model id (see `models list`)")
    p.add_argument("--n", type=int, help="number of increments")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE", help="model parameter")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--bound", choices=harness.BOUND_KINDS, help="bound to evaluate")
    p.add_argument("--a", help="smoothing parameter: number or 'auto'")
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples for the d_W standard error")
    p.add_argument("--out", help="CSV output path (default: stdout)")


def build_parser():
    parser = _Parser(prog="mclt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    verify = sub.add_parser("verify", help="compare one bound with the empirical distance")
    _run_args(verify)

    scan = sub.add_parser("rate-scan", help="verify across a grid of n and fit the log-log slope")
    _run_args(scan)
    scan.add_argument("--n-grid", help="comma-separated increasing n values")

    stein = sub.add_parser("stein-check", help="check the Stein-equation solutions and derivative bounds")
    stein.add_argument("--h", action="append", help="test function (repeatable; default: all)")
    stein.add_argument("--s", type=float, action="append", help="location (default: 0 1 2)")
    stein.add_argument("--t", type=float, action="append", help="scale (default: 0.5 1 2)")
    stein.add_argument("--points", type=int, default=2001)

    models = sub.add_parser("models", help="model registry")
    models_sub = models.add_subparsers(dest="models_command", required=True, parser_class=_Parser)
    models_sub.add_parser("list", help="list available models")
    return parser


def _resolve_config(args):
    flat = {}
    if args.config:
        flat = harness.parse_config_text(open(args.config, encoding="utf-8").read())
    if args.model is not None:
        if flat.get("model.id") not in (None, args.model):
            flat = {k: v for k, v in flat.items() if not k.startswith("model.params.")}
        flat["model.id"] = args.model
    if args.n is not None:
        flat["model.n"] = args.n
    for item in args.param:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        flat[f"model.params.{name.strip()}"] = harness._scalar(value)
    overrides = {
        "sim.reps": args.reps,
        "sim.seed": args.seed,
        "sim.bootstrap": args.bootstrap,
        "bound.kind": args.bound,
        "bound.a": args.a,
        "output.path": args.out,
        "n_grid": getattr(args, "n_grid", None),
    }
    flat.update({k: v for k, v in overrides.items() if v is not None})
    if "model.id" not in flat:
        raise ConfigError("no model given (use --model or model.id in --config)")
    if "model.n" not in flat and args.command == "rate-scan":
        flat["model.n"] = 1  # replaced per grid point
    return harness.config_from_flat(flat)


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_verify(args):
    config = _resolve_config(args)
    row = harness.run_verify(config)
    _write(harness.render_csv([row]), config.output_path)
    return EXIT_OK if row.passed else EXIT_FAILED


def _cmd_rate_scan(args):
    config = _resolve_config(args)
    report = harness.run_rate_scan(config)
    _write(harness.render_csv(report.rows), config.output_path)
    print(
        f"slope(log d_W vs log n) = {report.slope:.6f}  intercept = {report.intercept:.6f}  "
        f"slope(log bound vs log n) = {report.bound_slope:.6f}",
        file=sys.stderr if not config.output_path else sys.stdout,
    )
    return EXIT_OK if all(r.passed for r in report.rows) else EXIT_FAILED


def _cmd_stein(args):
    from .stein import test_function, verify_stein_bounds, TEST_FUNCTIONS

    names = args.h or list(TEST_FUNCTIONS)
    ok = True
    print(f"{'h':<13}{'s':>5}{'t':>6}{'residual':>12}{'|f1|':>10}{'1/t':>8}{'|f2|':>10}{'2/t^2':>8}  pass")
    for name in names:
        h = test_function(name)
        for s in args.s or (0.0, 1.0, 2.0):
            for t in args.t or (0.5, 1.0, 2.0):
                r = verify_stein_bounds(h, s, t, points=args.points)
                ok &= r.passed
                print(
                    f"{name:<13}{s:>5g}{t:>6g}{r.max_residual:>12.2e}{r.norm_fprime:>10.5f}{1 / t:>8.4f}"
                    f"{r.norm_fsecond:>10.5f}{2 / t**2:>8.4f}  {'yes' if r.passed else 'NO'}"
                )
    return EXIT_OK if ok else EXIT_FAILED


def _cmd_models(args):
    for model_id, cls in available_models().items():
        params = ", ".join(f"{k}={v:g}" for k, v in cls.defaults.items()) or "-"
        print(f"{model_id:<22}{params:<14}{cls.description}")
        if model_id in ("completed", "two-step"):
            continue
        cert = build_model(model_id, 4).certificates
        print(
            f"{'':<22}certificates (n=4): alpha={cert.alpha:g} gamma={cert.gamma} beta={cert.beta} "
            f"delta={cert.delta} condition2={cert.satisfies_condition2}"
        )
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "verify": _cmd_verify,
        "rate-scan": _cmd_rate_scan,
        "stein-check": _cmd_stein,
        "models": _cmd_models,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, MCLTError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
