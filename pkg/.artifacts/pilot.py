import time
from molim.experiments import Profile, run_all
from molim.topology import TopologyConfig

pilot = Profile(
    name="pilot", windows=(10,), n_sims_train=30, m_train_per_symbol=3000,
    filters=16, epochs=30, m_est=5000, eval_symbols=200, batch_size=16,
    eval_budgets=(1500.0,), eval_budget_windows=(10,), sweep_budget=750.0)
t0 = time.time()
paths = run_all(pilot, TopologyConfig(), "/root/pkg/.artifacts/pilot", seed=1, workers=1)
print(f"pilot done in {time.time()-t0:.0f}s")
for name, p in paths["reports"].items():
    print("report:", name, p)
    print(open(p).read())
