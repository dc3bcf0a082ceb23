"""Random small instances shared by the property tests."""
import numpy as np

from pond.instance import Bernoulli, Deterministic, Geometric, Instance, build_constraint


def random_instance(rng: np.random.Generator, max_n=3, max_m=4, max_k=3, n=None, m=None) -> Instance:
    n = n or int(rng.integers(1, max_n + 1))
    m = m or int(rng.integers(1, max_m + 1))
    arrivals = []
    for _ in range(n):
        kind = rng.integers(3)
        if kind == 0:
            arrivals.append(Deterministic(float(rng.integers(1, 3))))
        elif kind == 1:
            arrivals.append(Bernoulli(float(rng.uniform(0.2, 1.0))))
        else:
            arrivals.append(Geometric(float(rng.uniform(0.3, 2.0))))
    r = rng.uniform(0, 1, (n, m))
    lam = sum(a.mean() for a in arrivals)
    cons = []
    for kind in rng.choice(["capacity", "fairness", "resource"], size=int(rng.integers(0, max_k + 1))):
        if kind == "capacity":
            cons.append(build_constraint("capacity", n, service=list(rng.uniform(0.2, 1.5, m) * lam / m * 1.5)))
        elif kind == "fairness":
            cons.append(build_constraint("fairness", n, fractions=list(rng.uniform(0, 1.0 / m, m))))
        else:
            w = rng.uniform(0.5, 3, (n, m))
            cons.append(build_constraint("resource", n, weights=w.tolist(), requirements=list(rng.uniform(0.5, 4, m))))
    return Instance.from_means(arrivals, r, cons, c_lambda=4.0, c_u=4.0)


def random_fluid_arrays(rng: np.random.Generator, n: int, m: int, k: int):
    lam = rng.uniform(0.2, 2.0, n)
    r = rng.uniform(0, 1, (n, m))
    w = rng.uniform(-0.5, 3.0, (k, n, m))
    rho = rng.uniform(-0.2, 3.0, (k, m))
    return lam, r, w, rho
