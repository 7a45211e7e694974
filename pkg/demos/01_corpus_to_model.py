"""Synthetic rides to a cross-validated duration model.

Generates a 96-ride corpus whose true moving time depends on distance,
ascent and CTL, compares the default model line-up under nested
cross-validation, then explains one prediction.

Run: python3 demos/01_corpus_to_model.py
"""

from ridecast.dataset import assemble
from ridecast.explain import global_importance, shap_linear
from ridecast.synthetic import GeneratorSpec, generate_corpus
from ridecast.validation import default_specs, fit_final, run_cv


def main():
    spec = GeneratorSpec(seed=7)
    corpus = generate_corpus(spec)
    print(f"true model: {spec.intercept} + {spec.coefficients} + N(0, {spec.sigma}^2) minutes\n")

    data = assemble(corpus.activities, corpus.profiles, corpus.load_history, "topo-fit")
    report = run_cv(data, default_specs("topo-fit"), seed=0)
    print(report.table())

    best = report.best()
    model = fit_final(data, next(s for s in default_specs("topo-fit") if s.name == best.name))
    kept = [(n, c) for n, c in zip(model.feature_names, model.coef) if c != 0.0]
    print(f"{best.name}: {len(kept)} of {len(model.feature_names)} features kept")

    print("\nglobal importance (mean |SHAP|, minutes):")
    for name, value in global_importance(model, data)[:6]:
        print(f"  {name:<24} {value:6.2f}")

    row = data.rows[0]
    attr = shap_linear(model, row.features)
    print(f"\nride {row.activity_id}: actual {row.target:.1f} min, predicted {attr.prediction:.1f} min")
    print(f"  base (training mean) {attr.base_value:.1f} min")
    for name, phi in attr.top(4):
        print(f"  {name:<24} {phi:+6.1f} min")


if __name__ == "__main__":
    main()
