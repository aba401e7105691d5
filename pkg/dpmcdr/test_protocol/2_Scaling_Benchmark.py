"""
Identifier + Matching Scaling Benchmark (Protocol 2)
====================================================

Times one eval-mode forward pass of the level-1/level-2 identifier of both domains
plus the preference matcher for several group sizes N, with the default K=3, d=32.
The identifier cost should grow roughly linearly with N; the attention inside the
matcher adds an N^2 term that stays small at these widths.

Informational only: the ratio t(1024) / t(256) is compared with a loose band of 6x
and the result is reported, not asserted.

Usage:
    python 2_Scaling_Benchmark.py --sizes 256 1024 --repeats 5
"""

from datetime import datetime
from pathlib import Path
import argparse
import logging
import sys
import time

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))
from classes.Identifier import LatentPreferenceIdentifier
from classes.Matching import PreferenceMatcher, matching_loss
from classes.RandomStreams import RandomStreams
from classes.Tensor import Tensor


OUTPUT_DIR = "data/test_protocol/2_scaling"
RATIO_BAND = 6.0


def time_forward(size: int, layers: int, dim: int, heads: int, repeats: int, seed: int) -> float:
    """Median wall time (seconds) of one identifier + matching forward pass for group size ``size``."""
    logger = logging.getLogger("Model")
    width = layers * dim
    streams = RandomStreams(seed)
    identifier = LatentPreferenceIdentifier(logger, width, dim)
    matcher = PreferenceMatcher(logger, width, dim, heads, dropout=0.0)
    params = {domain: identifier.init_params(streams.get("init"), f"{domain}.") for domain in ("source", "target")}
    matching = matcher.init_params(streams.get("init"), "matching.")
    rows = {domain: Tensor(streams.get("sampling").standard_normal((size, width))) for domain in params}

    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        z2 = {}
        for domain in params:
            q1 = identifier.infer_level1(rows[domain], params[domain], "user")
            z1 = identifier.sample(q1, streams.get("noise"))
            z2[domain] = identifier.sample(identifier.infer_level2(z1, params[domain]), streams.get("noise"))
        matching_loss(matcher.invariant_preference(z2["source"], z2["target"], matching))
        timings.append(time.perf_counter() - start)
    return float(np.median(timings))


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Identifier + matching forward time versus group size")
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 1024])
    parser.add_argument("--layers", type=int, default=3)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--heads", type=int, default=2)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", type=str, default=OUTPUT_DIR)
    args = parser.parse_args()

    rows = []
    for size in args.sizes:
        seconds = time_forward(size, args.layers, args.dim, args.heads, args.repeats, args.seed)
        rows.append({"group_size": size, "seconds": seconds})
        print(f"N={size:>5}: {seconds * 1000.0:.2f} ms")

    df = pd.DataFrame(rows)
    df["ratio_to_smallest"] = df["seconds"] / df["seconds"].iloc[0]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    df.to_csv(out / f"scaling_{datetime.now().strftime('%Y%m%d_%H%M%S')}.csv", index=False)

    if {256, 1024} <= set(args.sizes):
        ratio = df.set_index("group_size").loc[1024, "seconds"] / df.set_index("group_size").loc[256, "seconds"]
        verdict = "within" if ratio < RATIO_BAND else "OUTSIDE"
        print(f"t(1024) / t(256) = {ratio:.2f} ({verdict} the {RATIO_BAND:.0f}x band)")
