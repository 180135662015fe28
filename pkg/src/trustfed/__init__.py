"""Trust-weighted federated learning simulator with decentralized backdoor defense.

Submodules:

* ``nn``       dense softmax classifier, SGD, ultimate-layer bookkeeping
* ``data``     synthetic clusters, non-IID partitioning, trigger injection
* ``clients``  benign and compromised local rounds
* ``ledger``   simulated contract: queue, trust scores, events, off-chain store
* ``defense``  verifier-side two-filter gradient scoring
* ``planner``  verifier-coverage closed forms and Monte Carlo oracle
* ``harness``  end-to-end runs, metrics, CSV/JSON emission
"""

from . import clients, data, defense, harness, ledger, nn, planner
from .harness import SimConfig, run
from .planner import expected_L, expected_V, mc_coverage

__version__ = "0.1.0"

__all__ = [
    "clients",
    "data",
    "defense",
    "harness",
    "ledger",
    "nn",
    "planner",
    "SimConfig",
    "run",
    "expected_L",
    "expected_V",
    "mc_coverage",
    "__version__",
]
