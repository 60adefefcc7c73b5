# One simulated day at desk scale: the auction mechanism against the baselines.
#
# 24 SBSs with 54% overlap, 2000 contents from 5 providers, 100 GB per SBS.
# Takes a few minutes; pass a smaller hour count to shorten it.

import sys

from cachemarket.experiments import ScenarioConfig, run_scenario

hours = int(sys.argv[1]) if len(sys.argv) > 1 else 24
cfg = ScenarioConfig(hours=hours)
res = run_scenario(cfg, out="one_day")

print(" t   users  mechanism  no-cache  popularity   greedy  lambda")
for h in res.hours:
    print(f"{h['t']:2d} {h['users']:6d} {h['D_mechanism']:10.1f} {h['D_nocache']:9.1f} "
          f"{h['D_highestpop']:11.1f} {h['D_greedy']:8.1f} {h['lambda']:7.3f}")

s = res.summary
print(f"\ndaily D: mechanism {s['D_mechanism']:.1f} ms, no caching {s['D_nocache']:.1f} ms "
      f"({1 - s['D_mechanism'] / s['D_nocache']:.0%} lower)")
print(f"highest popularity {s['D_highestpop']:.1f} ms, greedy {s['D_greedy']:.1f} ms")
print(f"auction iterations: mean {s['mean_iterations']:.1f} per round, "
      f"at most {s['max_iteration_ratio']:.1e} of alpha*N")
