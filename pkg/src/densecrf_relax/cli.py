"""Command-line front end: load or synthesize a problem, run a pipeline, write results."""

import argparse
import sys

import numpy as np

from .errors import DenseCRFError, InvalidInput, ParseError
from .filtering import Backend
from .io import grid_shape, load_image, load_unary, synthetic_instance, write_pgm
from .lp import load_tree
from .model import Potts, ProblemInstance, TreeCompat, build_features, round_argmax
from .pipeline import STAGES, PipelineSpec, run_pipeline
from .trace import write_traces

EXIT_PARSE = 2
EXIT_SOLVER = 3


def build_parser():
    p = argparse.ArgumentParser(prog="densecrf-relax", description="MAP inference for dense CRFs with continuous relaxations.")
    src = p.add_argument_group("input")
    src.add_argument("--unary", help="unary cost file (first line 'N M', then N rows)")
    src.add_argument("--image", help="H x W RGB raster whose pixels are the N variables")
    src.add_argument("--binary-unary", action="store_true", help="unary file is int32 N, int32 M, float32 costs (little-endian)")
    src.add_argument("--synthetic", nargs=3, type=int, metavar=("N", "M", "SEED"), help="generate a random instance instead")
    src.add_argument("--tree", help="r-HST label metric (lines 'node parent length [label=k]')")

    k = p.add_argument_group("kernels")
    k.add_argument("--w1", type=float, default=3.0)
    k.add_argument("--sigma1", type=float, default=3.0)
    k.add_argument("--w2", type=float, default=5.0)
    k.add_argument("--sigma-spc", type=float, default=50.0)
    k.add_argument("--sigma-col", type=float, default=10.0)

    s = p.add_argument_group("solver")
    s.add_argument("--pipeline", "--method", dest="pipeline", default="qp,dcneg,lp",
                   help=f"comma-separated stages from {{{','.join(STAGES)}}} (default qp,dcneg,lp)")
    s.add_argument("--filter", choices=[b.value for b in Backend], default="lattice")
    s.add_argument("--max-iter", type=int, help="iteration budget for every non-LP stage")
    s.add_argument("--tol", type=float, help="stopping tolerance for every non-LP stage")
    s.add_argument("--lp-iters", type=int, default=5)
    s.add_argument("--lp-beta0", type=float, default=1.0)
    s.add_argument("--restrict-labels", action="store_true", help="LP only keeps labels the warm start uses")
    s.add_argument("--seed", type=int, default=0, help="seed for randomized steps (KT rounding)")
    s.add_argument("--threads", type=int, help="cap on BLAS worker threads")

    o = p.add_argument_group("output")
    o.add_argument("--trace", help="CSV trace path")
    o.add_argument("--out", help="label map as 8-bit PGM")
    o.add_argument("--kt-round", action="store_true", help="round the final LP solution with Kleinberg-Tardos instead of argmax")
    return p


def load_problem(args):
    """ProblemInstance and raster shape from parsed arguments."""
    if args.synthetic:
        n, m, seed = args.synthetic
        image, unary, _ = synthetic_instance(n, m, seed)
    else:
        if not args.unary or not args.image:
            raise ParseError("--unary and --image are required unless --synthetic is given")
        unary = load_unary(args.unary, binary=args.binary_unary)
        image = load_image(args.image)
        h, w = image.shape[:2]
        if unary.shape[0] != h * w:
            raise ParseError(f"unary has {unary.shape[0]} rows but the image has {h} x {w} = {h * w} pixels", args.unary)
    kernels = build_features(image, args.w1, args.sigma1, args.w2, args.sigma_spc, args.sigma_col)
    compat = Potts()
    if args.tree:
        compat = TreeCompat(load_tree(args.tree))
    try:
        problem = ProblemInstance(unary, kernels, compat, Backend(args.filter))
    except InvalidInput as exc:
        raise ParseError(str(exc)) from None
    return problem, image.shape[:2]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        problem, shape = load_problem(args)
        spec = PipelineSpec([s.strip() for s in args.pipeline.split(",") if s.strip()], args.max_iter, args.tol,
                            args.lp_iters, args.lp_beta0, args.restrict_labels,
                            tree=problem.compat.tree if isinstance(problem.compat, TreeCompat) else None)
    except (DenseCRFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    limiter = None
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(args.threads)
    partial = []
    try:
        result = run_pipeline(problem, spec, on_stage=lambda r: partial.__setitem__(slice(None), r.traces))
    except (DenseCRFError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        if args.trace:
            write_traces(args.trace, partial)
        return EXIT_SOLVER
    finally:
        if limiter is not None:
            limiter.unregister() if hasattr(limiter, "unregister") else limiter.restore_original_limits()

    if args.trace:
        write_traces(args.trace, result.traces)
    labels = round_argmax(result.y)
    if args.kt_round and spec.stages[-1] == "lp":
        from .energy import ip_energy
        from .lp import kt_round

        kt = kt_round(result.y, args.seed)
        if ip_energy(problem, kt) <= ip_energy(problem, labels):
            labels = kt
    if args.out:
        if problem.n_labels > 256:
            print("error: PGM output needs at most 256 labels", file=sys.stderr)
            return EXIT_PARSE
        write_pgm(args.out, labels, shape)

    print("stage,relaxed_objective,integer_energy,wall_s")
    for s in result.summary:
        print(f"{s.stage},{s.relaxed_objective!r},{s.integer_energy!r},{s.wall_s:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
