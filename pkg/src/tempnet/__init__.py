"""Video event detection with a temporally attentive 3D CNN, built on a
from-scratch numpy autodiff core.

Submodules are imported lazily so that process-level knobs (BLAS thread
caps, see `tempnet.cli`) can be set before numpy is first loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "autodiff",
    "clipio",
    "configfile",
    "gradcheck",
    "network",
    "preproc",
    "store",
    "synth",
    "training",
)

# name -> submodule that defines it
_EXPORTS = {
    "Tensor": "autodiff",
    "Tape": "autodiff",
    "ShapeError": "autodiff",
    "NonFiniteError": "autodiff",
    "ParamStore": "store",
    "save_store": "store",
    "load_store": "store",
    "RawClip": "preproc",
    "PreprocConfig": "preproc",
    "preprocess": "preproc",
    "TempNetConfig": "network",
    "Network": "network",
    "build": "network",
    "count_params": "network",
    "count_flops": "network",
    "describe": "network",
    "TrainConfig": "training",
    "train": "training",
    "evaluate": "training",
    "metric_math": "training",
    "load_dataset": "training",
    "synthesize_dataset": "training",
    "SceneConfig": "synth",
    "generate": "synth",
    "generate_dataset": "synth",
    "run_gradcheck": "gradcheck",
}

__all__ = sorted(_EXPORTS) + list(_SUBMODULES)


def __getattr__(name):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
