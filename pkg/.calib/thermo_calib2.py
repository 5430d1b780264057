import warnings, time, json
import numpy as np
import fieldrom as fr
from fieldrom.experiments import thermo_initial, thermo_parameters, paper_config, build_spec

warnings.simplefilter("ignore")
cfg = paper_config("thermo")
spec = build_spec(cfg)
train_mu, test_mu = thermo_parameters(seed=0)
train_ds = fr.generate_trajectories(spec, thermo_initial, train_mu)
test_ds = fr.generate_trajectories(spec, thermo_initial, test_mu)

def evaluate(emb, tag):
    field = fr.NeuralGridField(emb)
    # reconstruction quality on test data
    from fieldrom.embedding import reconstruction_report
    rep = reconstruction_report(emb, test_ds)
    print(f"[{tag}] test recon rel mean {rep['relative_l2_mean']:.4%} max {rep['relative_l2_max']:.4%}", flush=True)
    # M=all rom on first test param
    sub = spec.with_params(test_mu[0])
    q0 = emb.transform(test_ds.fields[0,0].reshape(1,-1))[0]
    samples = fr.SampleSet.from_indices(np.arange(spec.n_points), spec.coordinates())
    run = fr.rom_rollout(field, q0, samples, sub)
    err = fr.relative_l2(run.reconstruction[-1], test_ds.fields[0,-1])
    print(f"[{tag}] M=all rom final err {err:.4%}", flush=True)
    # greedy 22
    t0 = time.time()
    gcfg = fr.GreedyConfig(max_samples=22, candidates=10, seed=0)
    s22, trace = fr.greedy_select(field, train_ds, spec, gcfg)
    print(f"[{tag}] greedy {time.time()-t0:.0f}s metric trace {['%.3g'%m for m in trace['metric'][::4]]}", flush=True)
    uni = fr.baseline_samples("uniform", 22, spec, 16)
    ge, ue = [], []
    for k in range(test_ds.n_params):
        sub = spec.with_params(test_mu[k])
        q0 = emb.transform(test_ds.fields[k,0].reshape(1,-1))[0]
        rg = fr.rom_rollout(field, q0, s22, sub)
        ge.append(fr.relative_l2(rg.reconstruction[-1], test_ds.fields[k,-1]))
        try:
            ru = fr.rom_rollout(field, q0, uni, sub)
            ue.append(fr.relative_l2(ru.reconstruction[-1], test_ds.fields[k,-1]))
        except Exception:
            ue.append(float("inf"))
        if k == 0:
            nu = sub.diffusivity()
            ee, se, te = fr.heat_energy_budget(rg.reconstruction, test_ds.coords, nu, sub.dt, 0.396, 0.526)
            print(f"[{tag}] reduced TE drift {np.max(np.abs(te-te[0]))/abs(te[0]):.4%}", flush=True)
    print(f"[{tag}] greedy errs {['%.34g'%e for e in ge]}", flush=True)
    print(f"[{tag}] uniform errs {['%.4g'%e for e in ue]}", flush=True)
    print(f"[{tag}] mean greedy {np.mean(ge):.4%} mean uniform {np.mean(ue):.4%} ratio {np.mean(ue)/np.mean(ge):.2f}", flush=True)

for width, epochs in ((48, 70), (64, 50)):
    emb = fr.NeuralFieldEmbedding(latent_dim=16, width_factor=width, epochs_per_stage=epochs,
                                  batch_size=32, seed=0, plateau_patience=25, verbose=1)
    t0 = time.time()
    emb.fit(train_ds.snapshot_matrix(), coords=train_ds.coords)
    print(f"[w{width}] train {time.time()-t0:.0f}s loss {emb.final_train_loss_:.3e} mse {emb.final_mse_:.3e}", flush=True)
    evaluate(emb, f"w{width}")
