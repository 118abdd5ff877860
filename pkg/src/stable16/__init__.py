"""Pure binary16 neural-net training with guarded adaptive optimizers.

The package has three layers:

- binary16/tensor: software IEEE binary16 scalar reference plus fast
  numpy/C tensors with per-operation rounding semantics;
- nn/optim/stability: a small MLP with reverse-mode gradients, SGD /
  RMSProp / Adam (standard, max-guarded, loss-scaled), and instrumentation
  that counts underflow/overflow/NaN events and checks the sufficiency
  assumptions those optimizers rely on;
- data/experiment/cli: IDX ingestion (plus a synthetic digit corpus
  generator), deterministic training runs, and the sweep harness that
  reproduces the epsilon collapse/rescue pattern end to end.
"""

__version__ = "0.1.0"

from .tensor import Kind, Tensor  # noqa: F401
