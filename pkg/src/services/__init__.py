"""
Training and experiment services.

- recommender, baselines: model strategies behind one interface
- bpr, training: sampling, loss, Adam and the training loop
- evaluation: ranking metrics and smoothness diagnostics
- synthetic, experiments, artifacts: data generation, sweeps, run manifests
"""
