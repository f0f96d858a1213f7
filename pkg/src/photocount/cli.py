"""Command-line interface: ``photocount <subcommand> [flags]``.

Exit codes: 0 ok, 2 unreadable input (missing file, bad JSON, bad flags),
3 schema violation, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io
from .bayes import posterior
from .channels import apply_forward, composed_matrix
from .distributions import (
    CountHistogram,
    DetectorModel,
    PhotonNumberDistribution,
    coherent_source,
    fock_source,
    pad,
)
from .exceptions import PhotocountError
from .inversion import channel_diagnostics, composed_inverse_analytic, invert_counts
from .maxent import MaxEntConfig, reconstruct_maxent
from .montecarlo import SimulationSpec, empirical_pmf, simulate

EXIT_OK, EXIT_PARSE, EXIT_SCHEMA, EXIT_INVARIANT = 0, 2, 3, 4


class InputError(Exception):
    """Missing or contradictory command-line input (exit 2)."""


def _load(path, schema, what):
    return io.validate(io.read_json(path), schema, what)


def _detector(args) -> DetectorModel:
    spec = {}
    if args.detector:
        spec = dict(_load(args.detector, io.DETECTOR_SCHEMA, "detector"))
    if args.efficiency is not None:
        spec["efficiency"] = args.efficiency
    if args.dark_mean is not None:
        spec["dark_mean"] = args.dark_mean
    if "efficiency" not in spec:
        raise InputError("no detector given: use --detector FILE or --efficiency")
    return DetectorModel(spec["efficiency"], spec.get("dark_mean", 0.0))


def _source(args) -> PhotonNumberDistribution:
    if args.coherent is not None:
        spec = {"kind": "coherent", "mean": args.coherent}
    elif args.fock is not None:
        spec = {"kind": "fock", "m": args.fock}
    elif args.source:
        spec = _load(args.source, io.SOURCE_SPEC_SCHEMA, "source")
    else:
        raise InputError("no source given: use --source FILE, --coherent MEAN or --fock M")
    if "probs" in spec:
        dist = PhotonNumberDistribution.from_json(spec)
        if args.truncation is not None and args.truncation != dist.truncation:
            dist = pad(dist, args.truncation)
        return dist
    truncation = args.truncation if args.truncation is not None else spec.get("truncation")
    if truncation is None:
        raise InputError("a generated source needs --truncation")
    if spec["kind"] == "coherent":
        return coherent_source(spec["mean"], truncation)
    return fock_source(spec["m"], truncation)


def _truncation(args, default=None) -> int:
    if args.truncation is not None:
        return args.truncation
    if default is None:
        raise InputError("--truncation is required")
    return default


def _observed(path):
    """Histogram or pmf JSON; returns (pmf, histogram-or-None)."""
    obj = io.read_json(path)
    if isinstance(obj, dict) and "counts" in obj:
        hist = CountHistogram.from_json(io.validate(obj, io.HISTOGRAM_SCHEMA, "histogram"))
        return empirical_pmf(hist), hist
    return PhotonNumberDistribution.from_json(io.validate(obj, io.DISTRIBUTION_SCHEMA, "distribution")), None


def cmd_simulate(args):
    source = _source(args)
    detector = _detector(args)
    spec = SimulationSpec(source, detector, args.trials, args.seed)
    hist = simulate(spec, workers=args.workers)
    params = {"source": source.to_json(), "detector": detector.to_json(), "trials": args.trials}
    return hist.to_json(), None, params


def cmd_forward(args):
    source = _source(args)
    detector = _detector(args)
    result = apply_forward(composed_matrix(detector, source.truncation), source)
    params = {"source": source.to_json(), "detector": detector.to_json()}
    return result.to_json(), io.format_table(result.probs, "k"), params


def cmd_posterior(args):
    prior = _source(args)
    detector = _detector(args)
    post = posterior(prior, composed_matrix(detector, prior.truncation), args.k)
    meta = {"prior": prior.to_json(), "detector": detector.to_json(), "k": args.k}
    out = post.to_json()
    out["metadata"] = meta
    return out, io.format_table(post.probs, "n"), meta


def cmd_invert(args):
    if not args.input:
        raise InputError("invert needs --input FILE")
    observed, _ = _observed(args.input)
    detector = _detector(args)
    truncation = _truncation(args, observed.truncation)
    if observed.truncation < truncation:
        # an unobserved count is a zero count
        observed = pad(observed, truncation)
    candidate, diag = invert_counts(observed, detector, truncation)
    if not diag.physical:
        print(
            f"WARNING: unphysical reconstruction (min entry {diag.min_entry:.3g}); "
            "linear inversion amplified noise in the counting data",
            file=sys.stderr,
        )
    out = {"truncation": truncation, "candidate": candidate.tolist(), "diagnostics": diag.to_json()}
    params = {"detector": detector.to_json(), "truncation": truncation}
    return out, io.format_table(candidate, "n"), params


def cmd_reconstruct(args):
    if not args.input:
        raise InputError("reconstruct needs --input FILE")
    hist = CountHistogram.from_json(_load(args.input, io.HISTOGRAM_SCHEMA, "histogram"))
    detector = _detector(args)
    cfg = dict(_load(args.config, io.CONFIG_SCHEMA, "config")) if args.config else {}
    if args.truncation is not None:
        cfg["truncation"] = args.truncation
    if args.seed_given:
        cfg["seed"] = args.seed
    if args.generations is not None:
        cfg["generations"] = args.generations
    if args.population_size is not None:
        cfg["population_size"] = args.population_size
    config = MaxEntConfig.from_json(cfg)
    result = reconstruct_maxent(hist, detector, config, workers=args.workers)
    params = {"detector": detector.to_json(), "config": config.to_json()}
    return result.to_json(), io.format_table(result.distribution.probs, "n"), params


def cmd_diagnose(args):
    detector = _detector(args)
    truncation = _truncation(args)
    forward = composed_matrix(detector, truncation)
    out = {"forward": forward.to_json()}
    if detector.efficiency > 0:
        cond, tail = channel_diagnostics(detector, truncation)
        out["inverse"] = composed_inverse_analytic(detector, truncation).to_json()
        out["condition_estimate"] = cond
        out["tail_sensitivity"] = tail
    else:
        out["inverse"] = None
        out["condition_estimate"] = float("inf")
        out["tail_sensitivity"] = float("inf")
    return out, None, {"detector": detector.to_json(), "truncation": truncation}


COMMANDS = {
    "simulate": cmd_simulate,
    "forward": cmd_forward,
    "posterior": cmd_posterior,
    "invert": cmd_invert,
    "reconstruct": cmd_reconstruct,
    "diagnose": cmd_diagnose,
}


class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photocount", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--detector", help="detector JSON {efficiency, dark_mean}")
    common.add_argument("--efficiency", type=float)
    common.add_argument("--dark-mean", type=float)
    common.add_argument("--truncation", type=int)
    common.add_argument("--seed", type=_seed, default=0, action=_SeedAction)
    common.add_argument("--out", help="output JSON path (default: stdout)")
    common.add_argument("--table", help="plain-text table path (default: next to --out)")
    common.add_argument("--workers", type=int, default=1)
    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--source", help="distribution JSON or {kind: coherent|fock, ...}")
    source.add_argument("--coherent", type=float, metavar="MEAN")
    source.add_argument("--fock", type=int, metavar="M")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common, source], help="Monte-Carlo count histogram")
    p.add_argument("--trials", type=int, required=True)
    sub.add_parser("forward", parents=[common, source], help="counting distribution of a source")
    p = sub.add_parser("posterior", parents=[common, source], help="posterior Q(n|k)")
    p.add_argument("--k", type=int, required=True)
    p = sub.add_parser("invert", parents=[common], help="analytic linear unfolding")
    p.add_argument("--input", help="histogram or distribution JSON")
    p = sub.add_parser("reconstruct", parents=[common], help="max-entropy reconstruction")
    p.add_argument("--input", help="histogram JSON")
    p.add_argument("--config", help="MaxEntConfig JSON")
    p.add_argument("--generations", type=int)
    p.add_argument("--population-size", type=int)
    sub.add_parser("diagnose", parents=[common], help="channel matrices and conditioning")
    return parser


def _side_path(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = getattr(args, "seed_given", False)
    started = time.perf_counter()
    try:
        payload, table, params = COMMANDS[args.command](args)
    except (InputError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as err:
        print(f"photocount {args.command}: input error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except jsonschema.ValidationError as err:
        print(f"photocount {args.command}: schema error: {err.message}", file=sys.stderr)
        return EXIT_SCHEMA
    except (PhotocountError, KeyError, TypeError) as err:
        print(f"photocount {args.command}: invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT

    outputs = []
    inputs = [
        p for p in (getattr(args, a, None) for a in ("detector", "source", "input", "config")) if p
    ]
    text = io.dumps(payload)
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        outputs.append(str(out))
    else:
        sys.stdout.write(text)
    table_path = args.table or (str(_side_path(Path(args.out), ".table.txt")) if args.out else None)
    if table is not None and table_path:
        Path(table_path).write_text(table, encoding="utf-8")
        outputs.append(table_path)

    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "parameters": params,
        "seed": args.seed,
        "version": __version__,
        "inputs": inputs,
        "outputs": outputs,
        "duration_seconds": time.perf_counter() - started,
    }
    if args.out:
        io.write_json(_side_path(Path(args.out), ".manifest.json"), manifest)
    else:
        print(json.dumps(manifest, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
