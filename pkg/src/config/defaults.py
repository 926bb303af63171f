DEFAULT_TOLERANCES = {
    "arnoldi": 1e-10,
    "mass": 1e-12,
    "poisson": 1e-10,
    "imaginary_energy": 1e-10,
    "density_cutoff": 1e-8,
}

DEFAULT_OUTPUT = {
    "directory": "runs",
    "cadence": 10,
    "checkpoint_cadence": 0,
    "field_samples": True,
}

DEFAULT_PARALLEL = {
    "threads": 1,
    "deterministic": True,
    "max_determinants": 2_000_000,
}

DEFAULT_PROPAGATION = {
    "dt": 0.01,
    "steps": 0,
    "m_max": 15,
    "splitting": "sequential",
}

DEFAULT_IMAGINARY_TIME = {
    "dt": 0.05,
    "max_steps": 500,
    "strict": True,
}

DEFAULT_SPECTRUM = {
    "window": "hann",
    "quantity": "acceleration",
}

DEFAULT_REFINEMENT = {
    "enabled": True,
    "max_passes": 10,
    "order": 1,
    "max_leaves": None,
}
