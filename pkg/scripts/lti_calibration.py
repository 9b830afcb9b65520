"""Monte-Carlo calibration of the residual detector.

For each requested false-alarm rate, simulates independent attack-free
runs and compares the empirical alarm rate, residual covariance and mean
|r| with their design values.

    python scripts/lti_calibration.py --runs 8 --steps 100000 --workers 4
"""

import argparse
from dataclasses import dataclass, field

import numpy as np

from cpsflow.config import load_lti
from cpsflow.lti import (DetectorConfig, LtiSystem, Observer, empirical_alarm_rate,
                         half_normal_stats, monte_carlo_residuals, residual_covariance,
                         settling_horizon, solve_lyapunov)


@dataclass
class Calibration:
    config: str = "configs/lti_calibration.toml"
    runs: int = 4
    steps: int = 100_000
    seed: int = 0
    workers: int = 1
    rates: list = field(default_factory=lambda: [0.01, 0.05, 0.1])


def calibrate(c: Calibration) -> None:
    conf = load_lti(c.config)
    sys_ = LtiSystem(conf.A, conf.B, conf.C, conf.R1, conf.R2)
    obs = Observer.for_system(sys_, conf.L, conf.x_hat0)
    S = residual_covariance(sys_, solve_lyapunov(sys_, conf.L))
    sigma = np.sqrt(np.diag(S))
    burn = settling_horizon(sys_, conf.L)
    series = monte_carlo_residuals(sys_, obs, c.steps + burn, c.runs, c.seed, c.workers)
    r = np.vstack([s[burn:] for s in series])
    print(f"{c.runs} runs x {c.steps} steps (burn-in {burn}), sigma {np.round(sigma, 6)}")
    cov_err = np.max(np.abs(np.cov(r.T, bias=True).reshape(S.shape) - S) / np.abs(S))
    hn = np.abs(r).mean(axis=0) / [half_normal_stats(s).mean for s in sigma] - 1
    print(f"covariance max relative error {cov_err:.4%}; half-normal mean error "
          f"{', '.join(f'{x:+.4%}' for x in hn)}")
    print("A*      threshold(s)            empirical rate(s)")
    for rate in c.rates:
        det = DetectorConfig.design(sigma, rate)
        emp = empirical_alarm_rate(r, det)
        print(f"{rate:<7g} {np.array2string(det.thresholds, precision=5):<23} "
              f"{np.array2string(emp, precision=5)}")


def main(argv=None) -> int:
    d = Calibration()
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=d.config)
    p.add_argument("--runs", type=int, default=d.runs)
    p.add_argument("--steps", type=int, default=d.steps)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--rates", type=float, nargs="+", default=d.rates)
    calibrate(Calibration(**vars(p.parse_args(argv))))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
