"""Predictions from route prefixes on front- and back-loaded routes.

A topology-only model predicts the full-route duration from what has been
ridden so far. On a route whose climbing sits at the end the prediction
keeps rising at each checkpoint; on a front-loaded route most of the rise
happens early.

Run: python3 demos/02_checkpoints.py
"""

import numpy as np

from ridecast.checkpoint import progressive_predictions
from ridecast.dataset import assemble
from ridecast.synthetic import GeneratorSpec, generate_corpus, generate_route
from ridecast.validation import fit_final, lasso_spec


def show(title, profile, model):
    print(f"\n{title}: {profile.total_distance / 1000:.1f} km")
    print(" frac    km  ascent  climbs  pred_min  min/%")
    for cp in progressive_predictions(profile, model):
        rate = "" if np.isnan(cp.change_rate) else f"{cp.change_rate:5.2f}"
        print(f"{cp.fraction:5.2f} {cp.dist_km:5.1f} {cp.ascent_m:7.0f} {cp.climbs:7d} {cp.predicted_min:9.1f}  {rate}")


def main():
    corpus = generate_corpus(GeneratorSpec(seed=7))
    data = assemble(corpus.activities, corpus.profiles, None, "topo")
    model = fit_final(data, lasso_spec())

    rng = np.random.default_rng(0)
    for placement in ("back", "front"):
        prof = generate_route(GeneratorSpec(placement=placement), rng, distance_km=60.0, gain_m=900.0)
        show(f"{placement}-loaded route", prof, model)


if __name__ == "__main__":
    main()
