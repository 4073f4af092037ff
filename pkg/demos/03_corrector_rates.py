"""A small corrector-rate sweep and a log-log chart.

The full acceptance sweep uses n_per_cell=16 and takes about two minutes;
this one uses n_per_cell=8 and runs in about fifteen seconds.

Run:  python3 demos/03_corrector_rates.py
"""
from perfhom.corrector import StudyConfig, convergence_study
from perfhom.svg import loglog_chart

eps_list = [0.25, 0.125, 0.0625]


def show(rec):
    print(f"  eps={rec.epsilon:<7} w1_sq={rec.w1_sq:.3e}  w2_int={rec.w2_int:.3e}  "
          f"surf_sq={rec.surf_sq:.3e}  ({rec.seconds:.1f}s)")


print("well-prepared data (micro and macro start from the same fields)")
good = convergence_study(StudyConfig(n_per_cell=8), eps_list, well_prepared=True, progress=show)
for q in ("w1_sq", "w2_int", "surf_sq"):
    print(f"  slope {q}: {good.slopes[q]:.3f}")

# Shift the micro temperature by 0.5 eps^(1/4). Then w0 ~ eps^(1/2) and the
# corrector bound only promises max(eps, eps^gamma) with gamma = 1/2.
print("\nill-prepared data")
bad = convergence_study(StudyConfig(n_per_cell=8), eps_list, well_prepared=False, progress=show)
print(f"  slope w0: {bad.slopes['w0']:.3f}   slope w1_sq: {bad.slopes['w1_sq']:.3f}")

series = {q: [(r.epsilon, getattr(r, q)) for r in good.records] for q in ("w1_sq", "w2_int", "surf_sq")}
series["w1_sq (ill-prepared)"] = [(r.epsilon, r.w1_sq) for r in bad.records]
with open("rates_demo.svg", "w") as fh:
    fh.write(loglog_chart(series, title="corrector norms vs epsilon"))
print("\nwrote rates_demo.svg")
