"""``tvlora`` command line: simulate, recon, eval, bench.

Exit status: 0 success, 1 invalid configuration or input, 2 numerical
failure inside a solver, 3 file system or file format error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, PipelineConfig, load_config_file
from .exceptions import NumericalError
from .pipeline import cmd_bench, cmd_eval, cmd_recon, cmd_simulate

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_VALIDATION", "EXIT_NUMERICAL", "EXIT_IO"]

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

COMMANDS = {"simulate": cmd_simulate, "recon": cmd_recon, "eval": cmd_eval, "bench": cmd_bench}

logger = logging.getLogger("tvlora")


def _shared(p):
    p.add_argument("--config", metavar="PATH", help="flat key = value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--views", type=int, help="number of projection angles")
    p.add_argument("--size", type=int, help="phantom side length in pixels")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--prior", metavar="{none,gaussian,file:PATH}")
    p.add_argument("--no-lora", action="store_true", default=None, help="set beta = 0")
    p.add_argument("--no-prior", action="store_true", default=None, help="skip the denoise step")
    p.add_argument("--no-fft-precond", action="store_true", default=None,
                   help="plain CG in the x-step")
    p.add_argument("--threads", type=int, help="slice workers (default: all cores)")
    p.add_argument("--n-det", dest="n_det", type=int, help="detector count override")
    p.add_argument("--n-outer", dest="n_outer", type=int, help="ADMM iterations")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="tvlora", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="phantom or raw volume -> sinograms")
    _shared(p)
    p.add_argument("--phantom", help="shepp-logan, disks or uniform-disk")
    p.add_argument("--slices", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--volume", metavar="PATH", help="raw little-endian volume to ingest")
    p.add_argument("--volume-dims", dest="volume_dims", metavar="W,H,S")
    p.add_argument("--element-type", dest="element_type")
    p.add_argument("--peak", type=float)

    p = sub.add_parser("recon", help="sinograms -> reconstructed volume")
    _shared(p)
    p.add_argument("--input", metavar="DIR", help="directory holding sino_*.sino (default: --out)")
    p.add_argument("--method", choices=("tvlora", "fbp"))
    p.add_argument("--gaussian-mean", dest="gaussian_mean", metavar="VALUE|IMG")
    p.add_argument("--gaussian-std", dest="gaussian_std", type=float)
    p.add_argument("--checkpoint", action="store_true", default=None)
    p.add_argument("--resume", action="store_true", default=None)

    p = sub.add_parser("eval", help="recon vs truth -> metrics.csv")
    _shared(p)
    p.add_argument("--input", metavar="DIR", help="directory holding recon.img (default: --out)")
    p.add_argument("--truth", metavar="PATH", help="ground truth image (default: INPUT/truth.img)")
    p.add_argument("--dataset", help="label for the dataset column")

    p = sub.add_parser("bench", help="four-variant ablation on a fixed instance")
    _shared(p)
    return parser


def resolve_config(args) -> PipelineConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    file_values = load_config_file(args.config) if args.config else {}
    return PipelineConfig.from_sources(file_values, flags)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"tvlora: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        # also FormatError and missing config files
        print(f"tvlora: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"tvlora: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
