"""Trace Wulff boundaries and curvature for the toy models and the exact Ising norm."""

import argparse
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ozlab.pipeline import curvature, ising_wulff_function, iid_steps_model, wulff_boundary, wulff_polar


@dataclass
class WulffConfig:
    beta: float = 0.3
    n_angles: int = 720
    s_max: float = 0.6
    n_s: int = 25


def run(cfg: WulffConfig) -> dict:
    two = iid_steps_model([(1, 0), (0, 1)], [0.5, 0.5])
    wb = wulff_boundary(two, np.linspace(-cfg.s_max, cfg.s_max, cfg.n_s))
    s = wb.samples
    sup = float(np.max(np.abs(s[:, 1] - np.log(2 - np.exp(s[:, 0])))))
    k0 = curvature(wulff_boundary(two, np.linspace(-0.1, 0.1, 21))).kappa[10]
    ang = 2 * np.pi * np.arange(cfg.n_angles) / cfg.n_angles
    ising = curvature(wulff_polar(ising_wulff_function(cfg.beta), ang))
    return {"toy_sup_error": sup, "toy_kappa0": float(k0), "toy_kappa0_exact": 1 / math.sqrt(2),
            "ising_kappa_min": ising.kappa_min, "ising_radius_min": ising.radius_min}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for k, v in asdict(WulffConfig()).items():
        ap.add_argument("--" + k, type=type(v), default=v)
    print(json.dumps(run(WulffConfig(**vars(ap.parse_args()))), indent=2))
