"""Regenerates restaurant_surrogate.csv (daily ingredient demand in kg).

750 simulated days; the first 14 only seed the lag columns, leaving 736 rows.
The CSV is checked in and tests read it directly, so this script only
documents how it was made.
"""
import numpy as np

rng = np.random.default_rng(20240607)
days = 750
t = np.arange(days)
weekday = t % 7
weekend = (weekday >= 4).astype(float)  # Fri-Sun
temperature = 11 + 9 * np.sin(2 * np.pi * (t - 100) / 365) + rng.normal(0, 3, days)
rain = (rng.random(days) < 0.3).astype(float)
holiday = (rng.random(days) < 0.03).astype(float)
level = np.zeros(days)
for i in range(1, days):
    level[i] = 0.8 * level[i - 1] + rng.normal(0, 1.5)
demand = (
    18
    + 9 * weekend
    + 0.25 * (temperature - 11)
    - 2.5 * rain
    + 7 * holiday
    + level
    + rng.gamma(4.0, 1.5, days)
    - 6
)
demand = np.maximum(demand, 0.0)

rows = range(14, days)
with open("restaurant_surrogate.csv", "w") as f:
    f.write("demand,holiday,lag7,lag14,rain,temperature\n")
    for i in rows:
        f.write(
            f"{demand[i]:.2f},{holiday[i]:.0f},{demand[i-7]:.2f},{demand[i-14]:.2f},"
            f"{rain[i]:.0f},{temperature[i]:.1f}\n"
        )
