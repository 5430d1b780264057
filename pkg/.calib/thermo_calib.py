import warnings, time, json
import numpy as np
import fieldrom as fr
from fieldrom.experiments import thermo_initial, thermo_parameters, paper_config, build_spec

warnings.simplefilter("ignore")
cfg = paper_config("thermo")
spec = build_spec(cfg)
train_mu, test_mu = thermo_parameters(seed=0)
t0 = time.time()
train_ds = fr.generate_trajectories(spec, thermo_initial, train_mu)
test_ds = fr.generate_trajectories(spec, thermo_initial, test_mu)
print("data gen %.1fs" % (time.time()-t0), flush=True)

emb = fr.NeuralFieldEmbedding(latent_dim=16, width_factor=64, epochs_per_stage=80,
                              batch_size=32, seed=0, plateau_patience=30, verbose=1)
t0 = time.time()
emb.fit(train_ds.snapshot_matrix(), coords=train_ds.coords)
print("train %.1fs final_mse %.3e loss %.3e" % (time.time()-t0, emb.final_mse_, emb.final_train_loss_), flush=True)

field = fr.NeuralGridField(emb)
# ROM with all samples on test params
for k in range(2):
    sub = spec.with_params(test_mu[k])
    q0 = emb.transform(test_ds.fields[k,0].reshape(1,-1))[0]
    samples = fr.SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())
    run = fr.rom_rollout(field, q0, samples, sub)
    err = fr.relative_l2(run.reconstruction[-1], test_ds.fields[k,-1])
    print(f"test {k} M=all final rel err: {err:.4%}", flush=True)

# greedy 22
t0 = time.time()
gcfg = fr.GreedyConfig(max_samples=22, candidates=10, seed=0)
samples22, trace = fr.greedy_select(field, train_ds, spec, gcfg)
print("greedy %.1fs indices:" % (time.time()-t0), sorted(samples22.indices.tolist()), flush=True)
print("metric trace:", ["%.3g" % m for m in trace["metric"]], flush=True)

uni22 = fr.baseline_samples("uniform", 22, spec, 16)
for k in range(test_ds.n_params):
    sub = spec.with_params(test_mu[k])
    q0 = emb.transform(test_ds.fields[k,0].reshape(1,-1))[0]
    rg = fr.rom_rollout(field, q0, samples22, sub)
    eg = fr.relative_l2(rg.reconstruction[-1], test_ds.fields[k,-1])
    try:
        ru = fr.rom_rollout(field, q0, uni22, sub)
        eu = fr.relative_l2(ru.reconstruction[-1], test_ds.fields[k,-1])
    except Exception as ex:
        eu = float("nan")
    print(f"test {k}: greedy22 {eg:.4%} uniform22 {eu:.4%}", flush=True)
    if k == 0:
        nu_arr = sub.diffusivity()
        ee, se, te = fr.heat_energy_budget(rg.reconstruction, test_ds.coords, nu_arr, sub.dt, 0.396, 0.526)
        print("reduced TE drift:", np.max(np.abs(te-te[0]))/abs(te[0]), flush=True)
