"""Surface L2 error of the initial data for Ex1 on two levels, for several
numbers of circle quadrature points.

With the symmetry fold of the quarter domain, L circle points collapse onto
about L/4 distinct points, so the L = 200 value of a single level carries
sampling noise; larger L shows the resolved ratio.

    python scripts/initial_projection_order.py
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from diffband.errors import surface_errors_step
from diffband.levelset import get_problem
from diffband.stepper import RunConfig, Stepper


@dataclass
class OrderConfig:
    eps: tuple = (0.4, 0.2 * math.sqrt(2))
    quad_points: tuple = (199, 200, 201, 1000, 20000)


def measure(cfg: OrderConfig = OrderConfig()):
    p = get_problem("ex1")
    levels = []
    for eps in cfg.eps:
        st = Stepper(p, RunConfig(problem="ex1", eps=eps, final_time=0.0, check_coupling=False))
        s0 = st.initial_state()
        levels.append({"eps": eps, "h": st.p.h,
                       "E3_0": {L: surface_errors_step(s0.band, s0.u, p, L)[0]
                                for L in cfg.quad_points}})
    a, b = levels
    ratios = {L: a["E3_0"][L] / b["E3_0"][L] for L in cfg.quad_points}
    return {"levels": levels, "ratio": ratios, "expected": (a["h"] / b["h"]) ** 4}


def main():
    print(json.dumps(measure(), indent=2))


if __name__ == "__main__":
    main()
