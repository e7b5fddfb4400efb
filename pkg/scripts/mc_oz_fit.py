"""Monte Carlo estimate of the plane Ising two-point function and an OZ exponent fit."""

import argparse
import json
import time
from dataclasses import asdict, dataclass

from ozlab.gibbs import monte_carlo_two_point
from ozlab.pipeline import oz_fit


@dataclass
class MCConfig:
    box: int = 128
    beta: float = 0.35
    sweeps: int = 8000
    warmup: int = 300
    chains: int = 4
    rmax: int = 30
    seed: int = 7
    window: tuple = (8, 24)


def run(cfg: MCConfig) -> dict:
    t0 = time.perf_counter()
    tab = monte_carlo_two_point(cfg.box, cfg.beta, cfg.sweeps, seed=cfg.seed, warmup=cfg.warmup,
                                rmax=cfg.rmax, chains=cfg.chains)
    fit = oz_fit(tab, 0.0, 2, (1, 0), cfg.window, joint=True)
    return {"config": asdict(cfg), "p_hat": fit.p_hat, "p_err": fit.p_err, "xi": fit.xi,
            "xi_err": fit.xi_err, "phi": fit.phi_hat, "seconds": time.perf_counter() - t0,
            "g": {r: tab.g((0, 0), (r, 0)) for r in range(1, cfg.rmax + 1)}}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for k, v in asdict(MCConfig()).items():
        if not isinstance(v, tuple):
            ap.add_argument("--" + k, type=type(v), default=v)
    cfg = MCConfig(**vars(ap.parse_args()))
    print(json.dumps(run(cfg), indent=2))
