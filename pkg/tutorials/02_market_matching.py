# Market matching on a toy auction.
#
# Rows are content blocks (bidders), columns are storages. The algorithm
# raises prices on over-demanded storages until every bidder can get one of
# its preferred storages; the result maximizes total value.

import numpy as np
from scipy.optimize import linear_sum_assignment

from cachemarket.auction import market_match, quantize

# two bidders who both want storage 0
r = market_match([[3, 1], [3, 1]], trace=True)
print("assignment", r.assignment, "prices", r.prices, "iterations", r.iterations)
print("price steps", r.trace)

# more bidders than storages: the extra ones end up with a virtual storage (-1)
r = market_match([[5, 0], [9, 2], [7, 6]])
print("assignment", r.assignment, "prices", r.prices, "welfare", r.welfare)

# real valuations are first rounded to a grid of max/alpha
rng = np.random.default_rng(1)
values = rng.lognormal(0, 1, (60, 8))
for alpha in (10, 100, 1000):
    vm = quantize(values, alpha)
    r = market_match(vm)
    rows, cols = linear_sum_assignment(values, maximize=True)
    print(f"alpha={alpha:5d}  iterations={r.iterations:4d}  bound={alpha * 60:6d}  "
          f"true value {values[np.flatnonzero(r.assignment >= 0), r.assignment[r.assignment >= 0]].sum():.3f}"
          f"  optimum {values[rows, cols].sum():.3f}")
