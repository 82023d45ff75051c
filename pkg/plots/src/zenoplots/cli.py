"""Command-line entry point: one subcommand per figure id.

Flags mirror the PlotSpec fields: input roles, the output image path, and
the per-figure style options.  Input problems (missing files, wrong or
missized columns) exit with status 2 and a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import PlotSpec, render
from .io import PlotInputError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zenoplots",
        description="Render simulation CSV/JSON outputs into the standard figures.",
    )
    sub = parser.add_subparsers(dest="figure_id", required=True)

    def new(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("-o", "--output", type=Path, default=Path(f"{name}.png"),
                        help="output image path (default %(default)s)")
        return sp

    p3 = new("fig3", "schedules + fidelity traces with spectrum inset")
    p3.add_argument("--schedules", type=Path, required=True,
                    help="CSV with columns T_f,kind,t,theta")
    p3.add_argument("--fidelities", type=Path, required=True,
                    help="CSV with columns T_f,kind,t,fidelity")
    p3.add_argument("--spectrum", type=Path, required=True,
                    help="CSV with columns theta,lambda_*,gap")
    p3.add_argument("--log-y", action="store_true",
                    help="log scale on the spectrum inset")

    p4 = new("fig4", "final-fidelity histograms with post-selection cutoff")
    p4.add_argument("--shots", type=Path, required=True,
                    help="CSV with columns kind,shot,final_fidelity")
    p4.add_argument("--summary", type=Path, default=None,
                    help="optional JSON summary (cutoff + post-selected means)")
    p4.add_argument("--cutoff", type=float, default=0.05,
                    help="cutoff line position when no summary is given")
    p4.add_argument("--bins", type=int, default=40, help="histogram bin count")

    p5 = new("fig5", "relative speedup versus problem size")
    p5.add_argument("--speedup", type=Path, required=True,
                    help="CSV with columns n,...,G_lindblad,G_mlp")
    p5.add_argument("--inset", type=Path, default=None,
                    help="optional CSV with the 3-SAT inset points")
    p5.add_argument("--log-y", action="store_true",
                    help="log scale on the speedup axis")

    p6 = new("fig6", "per-qubit schedule divergence trace")
    p6.add_argument("--distance", type=Path, required=True,
                    help="CSV with columns instance,iteration,dbar")
    p6.add_argument("--linear-y", action="store_true",
                    help="linear instead of log divergence axis")
    return parser


def spec_from_args(args: argparse.Namespace) -> PlotSpec:
    fid = args.figure_id
    if fid == "fig3":
        inputs = {
            "schedules": args.schedules,
            "fidelities": args.fidelities,
            "spectrum": args.spectrum,
        }
        return PlotSpec(fid, inputs, args.output, log_axes=args.log_y)
    if fid == "fig4":
        inputs = {"shots": args.shots}
        if args.summary is not None:
            inputs["summary"] = args.summary
        return PlotSpec(fid, inputs, args.output, cutoff=args.cutoff, bins=args.bins)
    if fid == "fig5":
        inputs = {"speedup": args.speedup}
        if args.inset is not None:
            inputs["inset"] = args.inset
        return PlotSpec(fid, inputs, args.output, log_axes=args.log_y)
    inputs = {"distance": args.distance}
    return PlotSpec(fid, inputs, args.output, log_axes=not args.linear_y)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(spec_from_args(args))
    except PlotInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as err:  # pragma: no cover - defensive
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
