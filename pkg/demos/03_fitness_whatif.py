"""How the predicted duration of one route varies with fitness.

Fits a topology-plus-fitness model and sweeps CTL at fixed form (TSB).
The sweep shows the association learned from the training rides, not
the effect of getting fitter.

Run: python3 demos/03_fitness_whatif.py
"""

import numpy as np

from ridecast.athlete import evolve_fitness
from ridecast.checkpoint import WHATIF_CAVEAT, ctl_sweep, sweep_range, whatif
from ridecast.dataset import assemble
from ridecast.synthetic import GeneratorSpec, generate_corpus, generate_route
from ridecast.validation import fit_final, lasso_spec


def main():
    corpus = generate_corpus(GeneratorSpec(seed=7))
    states = evolve_fitness(corpus.load_history)
    print(f"load history: {len(states)} days, CTL peaks at {max(s.ctl for s in states):.1f}")

    data = assemble(corpus.activities, corpus.profiles, corpus.load_history, "topo-fit")
    model = fit_final(data, lasso_spec())
    route = generate_route(GeneratorSpec(), np.random.default_rng(1), distance_km=50.0, gain_m=600.0)

    base = whatif(route, model, {})
    print(f"\n50 km route at training-mean fitness: {base.predicted_min:.1f} min")
    sweep = ctl_sweep(route, model, [20, 30, 40, 50], tsb=0.0)
    for ctl, pred in sweep:
        print(f"  CTL {ctl:4.0f}, TSB 0 -> {pred:6.1f} min")
    print(f"range over the sweep: {sweep_range(sweep):.1f} min")
    print(f"\n{WHATIF_CAVEAT}")


if __name__ == "__main__":
    main()
