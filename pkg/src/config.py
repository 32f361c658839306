"""Configuration defaults for ReflectedDiffusion."""

CONFIG_SCHEMA_VERSION = 1

# Image-series kernel evaluation
KERNEL_CONFIG = {
    "tol": 1e-10,  # truncation tolerance on the image series
    "K_min": 1,
    "K_max": 64,  # lattice radius cap; hitting it sets the truncation flag
    "log_domain": True,
    "log_weight_floor": 46.0,  # atoms below max - floor are skipped (e^-46 ~ 1e-20)
    "max_lattice_size": 1_000_000,  # (2K+1)^D above this refuses direct enumeration
    "chunk_budget": 4_000_000,  # floats per evaluation chunk
}

# Subspace-density quadrature
QUADRATURE_CONFIG = {
    "n_nodes": 64,  # Gauss-Legendre nodes per panel (d = 1)
    "n_nodes_2d": 24,  # nodes per axis per panel for d = 2
    "n_nodes_global": 24,  # d = 1 nodes per panel once the window covers the support
    "window_sigmas": 8.0,  # window half-width in units of sqrt(t)
    "max_panels": 64,
    "jacobi_nodes": 128,  # radial Gauss-Jacobi nodes for the normalizing constant
}

# Target measures
TARGET_CONFIG = {
    "kind": "two_atom",  # two_atom | point_mass | empirical | subspace | csv | json
    "points": [[0.3], [0.7]],
    "weights": None,
    "D": 2,
    "d": 1,
    "alpha": 1,
    "c0": None,  # None -> alpha + d
    "bump_strength": 1.0,
    "rho_min": 0.1,
    "radius_scale": 0.95,
    "radius": None,
    "path": None,
    "rescale": True,
    "max_rejection_batches": 10_000,
}

# Training data
DATA_CONFIG = {
    "n_train": 4096,
}

# Geometric time grid t_i = T_lo * c^i
GRID_CONFIG = {
    "T_lo": 1e-3,
    "T_hi": 4.0,
    "c": 2.0,  # upper bound on the ratio; the realized c is derived from the endpoints
    "preset": None,  # None | "theorem"
}

# Score network per interval
NET_CONFIG = {
    "depth": 3,
    "width": 64,
    "norm_bound": 0.0,  # 0 = unbounded
    "clip_scale": 4.0,
    "output_scaling": True,
    "preset": None,  # None | "theorem"
    "delta": 0.1,
    "max_width": 256,
    "max_depth": 6,
}

# Denoising score-matching training
TRAIN_CONFIG = {
    "n_mc": 1,
    "batch": 128,
    "steps": 2000,
    "lr": 1e-3,
    "optimizer": "adam",
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "fixed_panel": False,
    "panel_size": 8192,
    "log_every": 50,
    "n_test": 512,
    "stop_after": None,  # stop each interval after this many steps (resumable)
}

# Backward sampling
SAMPLE_CONFIG = {
    "n_samples": 4096,
    "substeps_per_interval": 64,
    "score": "learned",  # learned | exact
    "checkpoints": None,  # defaults to the train run of the same config
    "batch_size": 2048,
    "n_projections": 128,
    "tv_nodes_2d": 257,
}

# Forward simulation
SIMULATE_CONFIG = {
    "n_paths": 100,
    "times": [0.0, 0.01, 0.1, 1.0],
    "write_paths": True,
    "local_time_eps": None,  # set to report occupation local times
    "batch_size": 1024,
}

# Bound verification
VERIFY_CONFIG = {
    "suites": [
        "early_stopping",
        "ergodicity",
        "score_growth",
        "tube_score",
        "tube_tail",
        "q_gradient",
        "truncation",
        "brownian_tail",
        "brownian_tail_mean",
        "density_lower",
        "path_band",
    ],
    "slack": 1.5,  # multiplier on the fitted constant before validation
    "n_samples": 100_000,
    "n_brownian": 1_000_000,
    "n_paths": 2000,
    "truncation_slope": -0.8,
}

# Rate study
RATE_STUDY_CONFIG = {
    "n_values": [256, 1024, 4096],
    "n_reference": 4096,
}

# Kernel dump
KERNEL_DUMP_CONFIG = {
    "t_values": [1e-3, 1e-2, 1e-1, 1.0],
    "n_points": 201,
}

# Output layout
OUTPUT_CONFIG = {
    "output_dir": "out",
    "float_format": "%.17g",
    "plot": False,
}

# Logging Configuration
LOGGING_CONFIG = {
    "level": "INFO",  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    "file": "reflected_diffusion.log",
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
}
