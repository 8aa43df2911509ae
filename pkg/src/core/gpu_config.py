import logging
import os
import random

import numpy as np
import torch

logger = logging.getLogger(__name__)

# GPU Configuration
CUDA_AVAILABLE = torch.cuda.is_available()
DEVICE = torch.device("cuda" if CUDA_AVAILABLE else "cpu")

# Performance Settings
NUM_WORKERS = 0


def get_device(force_cpu: bool = False) -> torch.device:
    """Returns the currently configured device (cuda or cpu)."""
    if force_cpu:
        return torch.device("cpu")
    return DEVICE


def set_random_seed(seed: int, deterministic: bool = True) -> None:
    """Seed python, numpy and torch so that runs are reproducible."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if CUDA_AVAILABLE:
        torch.cuda.manual_seed_all(seed)
    if deterministic:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False
        try:
            torch.use_deterministic_algorithms(True, warn_only=True)
        except TypeError:
            torch.use_deterministic_algorithms(True)
    logger.debug(f"🎲 Seed set to {seed} (device: {DEVICE})")


def get_rng_state() -> dict:
    state = {
        "python": random.getstate(),
        "numpy": np.random.get_state(),
        "torch": torch.get_rng_state(),
    }
    if CUDA_AVAILABLE:
        state["cuda"] = torch.cuda.get_rng_state_all()
    return state


def set_rng_state(state: dict) -> None:
    random.setstate(state["python"])
    np.random.set_state(state["numpy"])
    torch.set_rng_state(state["torch"])
    if CUDA_AVAILABLE and "cuda" in state:
        torch.cuda.set_rng_state_all(state["cuda"])
