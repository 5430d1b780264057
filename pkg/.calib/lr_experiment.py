import warnings, time
warnings.simplefilter("ignore")
import numpy as np
import fieldrom as fr
from fieldrom.experiments import thermo_initial, thermo_parameters, paper_config, build_spec

cfg = paper_config("thermo")
spec = build_spec(cfg)
train_mu, _ = thermo_parameters(seed=0)
ds = fr.generate_trajectories(spec, thermo_initial, train_mu)

for base_lr in (1e-4, 2e-4, 4e-4, 8e-4):
    emb = fr.NeuralFieldEmbedding(latent_dim=16, width_factor=64, epochs_per_stage=30,
                                  batch_size=16, seed=0, lr_schedule=(10.0,), base_lr=base_lr,
                                  plateau_patience=1000)
    t0 = time.time()
    emb.fit(ds.snapshot_matrix(), coords=ds.coords)
    print("stage0 lr=%.0e: 30 epochs in %.0fs -> loss %.3e" %
          (10*base_lr, time.time()-t0, emb.final_train_loss_), flush=True)
