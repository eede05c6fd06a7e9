import numpy as np, time
from molim.storage import load_dataset
from molim.cnn import CnnArchitecture, TrainConfig, predict_batch
from molim.experiments import train_on_dataset, gen_samples, evaluate
from molim.topology import TopologyConfig

ds = load_dataset(".artifacts/pilot/datasets/w10")
print("dataset:", len(ds.samples), "sims, M =", ds.molecules_per_symbol)
arch = CnnArchitecture(w=10, filters=16, dense_width=128)
tc = TrainConfig(epochs=100, batch_size=16, seed=3, validation_fraction=0.1)
t0 = time.time()
model, trace = train_on_dataset(ds, arch, tc)
print(f"train 100 epochs: {time.time()-t0:.0f}s")
for e in (trace[0], trace[24], trace[49], trace[99]):
    print(f"  epoch {e.epoch}: train_loss {e.train_loss:.4f} acc {e.train_acc:.3f} "
          f"val_loss {e.val_loss:.4f} val_acc {e.val_acc:.3f}")

def sym_acc(samples):
    x = np.stack([r.normalized_series for r in samples])
    pred = predict_batch(model, x)
    truth = np.stack([r.true_symbols for r in samples])
    return (pred == truth).mean()

print("train-set symbol acc:", round(sym_acc(ds.samples), 3))
cfg = TopologyConfig()
fresh_same = gen_samples(cfg, 10, 6, 3000, seed=777)
print("fresh @M=3000 acc:", round(sym_acc(fresh_same), 3))
fresh_eval = gen_samples(cfg, 10, 6, 2250, seed=888)
print("fresh @M=2250 acc:", round(sym_acc(fresh_eval), 3))
fresh_low = gen_samples(cfg, 10, 6, 1125, seed=999)
print("fresh @M=1125 acc:", round(sym_acc(fresh_low), 3))
