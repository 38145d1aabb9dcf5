# %% [markdown]
# # Learning which clients tend to survive the filter
#
# Each round the filter keeps some sampled clients and drops others. The bandit
# samplers treat "kept" as reward 1 and "dropped" as reward 0. Here a toy
# environment keeps client k with a fixed probability, and we watch how often
# each sampler picks the reliable clients.

# %%
import numpy as np

from fedcm.rng import RngStream
from fedcm.sampling import sample_uniform, ts_init, ts_update_and_select, ucb_init, ucb_update_and_select

n, m, rounds = 12, 4, 400
keep_prob = np.linspace(0.05, 0.95, n)
gen = np.random.default_rng(1)
root = RngStream(1)


def feedback(sampled):
    return tuple(k for k in sampled if gen.random() < keep_prob[k])


# %%
picks = {name: np.zeros(n, int) for name in ("uniform", "ucb", "ts")}
ucb, ts = ucb_init(n, root.derive("init")), ts_init(n)
prev = {"ucb": ((), ()), "ts": ((), ())}
for t in range(rounds):
    u = sample_uniform(range(n), m, root.derive("uniform", t)).sampled
    ucb, out_ucb = ucb_update_and_select(ucb, *prev["ucb"], t + 1, m)
    ts, out_ts = ts_update_and_select(ts, *prev["ts"], m, root.derive("ts", t))
    for name, sampled in (("uniform", u), ("ucb", out_ucb.sampled), ("ts", out_ts.sampled)):
        picks[name][list(sampled)] += 1
    prev["ucb"] = (out_ucb.sampled, feedback(out_ucb.sampled))
    prev["ts"] = (out_ts.sampled, feedback(out_ts.sampled))

# %%
print("client  keep_p  uniform  ucb   ts")
for k in range(n):
    print(f"{k:6d}  {keep_prob[k]:.2f}   {picks['uniform'][k]:5d}  {picks['ucb'][k]:4d}  {picks['ts'][k]:4d}")
print("TS posterior means:", np.round(ts.alpha / (ts.alpha + ts.beta), 2))
