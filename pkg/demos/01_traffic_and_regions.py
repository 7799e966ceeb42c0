"""
How many vehicles does an RSU see, and where are they?
======================================================

Vehicles enter a 1.2 km segment with shifted-exponential headways: a hard
minimum gap ``x_min`` plus an exponential part.  The number on the segment
is a renewal count whose distribution we can write down exactly, and the
distance of a tagged vehicle from the roadside unit decides its link rate.
"""

import numpy as np

from v2rgame import linkstate, traffic

d = 1200.0

# count distribution for a few densities (vehicles per metre)
for lam in (0.005, 0.01, 0.03, 0.1):
    cls = traffic.VehicleClass(lam, x_min=5.0)
    pmf = traffic.count_pmf(cls, d)
    mc = traffic.sample_counts(cls, d, 100_000, seed=1)
    tv = traffic.total_variation(pmf.probs, traffic.empirical_pmf(mc, len(pmf.probs)))
    mode = int(np.argmax(pmf.probs))
    print(f"lambda={lam:<6} mean={pmf.mean:7.2f}  mode={mode:4d}  "
          f"MC mean={mc.mean():7.2f}  TV(analytic, MC)={tv:.4f}")

# The minimum headway caps the count at d / x_min = 240; dense traffic
# piles up near that cap and the mean grows sublinearly in lambda.

# two classes on the same road: the joint count is the convolution
classes = [traffic.VehicleClass(0.01, 5.0), traffic.VehicleClass(0.005, 8.0)]
joint = traffic.joint_count_pmf(classes, d)
print(f"\njoint mean {joint.mean:.2f} "
      f"(sum of class means {sum(traffic.count_pmf(c, d).mean for c in classes):.2f})")

# link-state regions: three rings of decreasing rate around the RSU
model = linkstate.RegionModel((1200, 800, 400), rates=[55, 110, 220], d=d)
probs = linkstate.region_probabilities(model)
dist = linkstate.sample_distances(d, 200_000, seed=2)
inner = np.append(model.radii[1:], 0.0)
emp = [np.mean((dist > lo) & (dist <= hi)) for hi, lo in zip(model.radii, inner)]
print("\nregion   analytic   sampled")
for f, (p, e) in enumerate(zip(probs.p, emp)):
    print(f"  {f}      {p:.4f}     {e:.4f}")

# mean transmit time of an 8000-bit frame, weighted by region occupancy
print(f"\nmean frame time {linkstate.frame_time_mean(probs.p, model.rates, 8000):.1f} slots")
