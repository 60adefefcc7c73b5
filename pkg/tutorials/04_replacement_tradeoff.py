# Additional prices against churn: sweep omega and watch lambda and D.
#
# The penalty omega * (1 - eps) * theta_back is subtracted from bids for data
# an SBS did not hold last hour. Valuations grow with users and popularity
# while the penalty does not, so at desk scale omega needs to reach the tens
# before the delay cost shows.

from cachemarket.experiments import ScenarioConfig, SweepSpec, sweep

cfg = ScenarioConfig(hours=12, strategies=("mechanism", "nocache"))
spec = SweepSpec("omega", (0.0, 2.0, 4.0, 10.0, 25.0, 100.0), seeds=1)
res = sweep(cfg, spec, out="omega_sweep")

print("omega   lambda      D")
for row in res.rows:
    print(f"{row['value']:5g}  {row['lambda']:7.3f}  {row['D_mechanism']:7.2f}")
print("chart: omega_sweep/sweep.svg")
