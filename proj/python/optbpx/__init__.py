"""Learned BPX preconditioners: Python bindings."""

import json
import os
import sys

try:
    from . import _core
except ImportError:
    _dir = os.environ.get("OPTBPX_CORE_DIR")
    if not _dir:
        raise
    sys.path.insert(0, _dir)
    import _core

__version__ = _core.__version__
OptbpxError = _core.OptbpxError
ConfigError = _core.ConfigError
IndefiniteOperator = _core.IndefiniteOperator
NotSymmetric = _core.NotSymmetric
UnsupportedParams = _core.UnsupportedParams
estimate = _core.estimate
report = _core.report


def assemble(kind, L, params=None):
    """Dense operator matrix for an equation kind at level L."""
    return _core.assemble(kind, L, {k: str(v) for k, v in (params or {}).items()})


def classical_params(L, dim):
    return json.loads(_core.classical_params(L, dim))


def preconditioner(params):
    """Dense BPX matrix for a parameter dict."""
    return _core.preconditioner(json.dumps(params))


def run_baseline(config, L):
    return json.loads(_core.run_baseline(json.dumps(config), L))


def run_experiment(config, L):
    return json.loads(_core.run_experiment(json.dumps(config), L))


def verify(seed=0, draws=20):
    return [{"name": n, "passed": p, "detail": d} for n, p, d in _core.verify(seed, draws)]
