"""Gaussian and saddle-point local limit errors against the exact displacement law."""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from ozlab.local_limit import llt_errors, qn_distribution, saddlepoint_llt
from ozlab.ruelle import Alphabet, RuelleOperator


@dataclass
class LLTConfig:
    nu: float = 0.3
    ns: tuple = (50, 100, 200, 400)


def models() -> dict:
    binom = RuelleOperator.iid(Alphabet.simple([0, 1]), [0.5, 0.5])
    M = np.array([[0.6, 0.3], [0.2, 0.5]])
    depth1 = RuelleOperator.from_matrix(Alphabet(("a", "b"), np.array([[1], [2]])), M).normalize()
    return {"binomial": (binom, None), "depth-1": (depth1, (0,))}


def saddle_error(op, n: int, nu: float, ctx) -> float:
    dist = qn_distribution(op, None, n, ctx)
    v = dist.running_mean
    return max(abs(saddlepoint_llt(op, None, n, r, ctx) / dist.q(r) - 1)
               for r in dist.points() if abs(r[0] - n * v[0]) < n ** (1 - nu))


def run(cfg: LLTConfig) -> dict:
    out = {}
    for name, (op, ctx) in models().items():
        out[name] = {n: {"gaussian": llt_errors(op, None, n, cfg.nu, ctx)["max_rel_err"],
                         "saddlepoint": saddle_error(op, n, cfg.nu, ctx)} for n in cfg.ns}
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nu", type=float, default=0.3)
    ap.add_argument("--ns", type=int, nargs="+", default=[50, 100, 200, 400])
    a = ap.parse_args()
    print(json.dumps(run(LLTConfig(a.nu, tuple(a.ns))), indent=2))
