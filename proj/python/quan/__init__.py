"""Python access to the quan set-attention classifiers and data generators."""

import json as _json

from ._quan import (
    ConfigError,
    Error,
    Model as _Model,
    __version__,
    closed_loop_expectation,
    layers_required,
    moment_order,
    one_sided_ttest,
    parity_samples,
    rqc_samples,
    rqc_state,
    spearman,
    toric_snapshots,
    xeb_exact,
)
from ._quan import run as _run


class Model:
    """A classifier in double precision, built from a config dict or a checkpoint."""

    def __init__(self, handle):
        self._m = handle

    @classmethod
    def from_config(cls, config, init="xavier_normal", seed=0):
        return cls(_Model.from_config(_json.dumps(config), init, seed))

    @classmethod
    def load(cls, path):
        return cls(_Model.load(str(path)))

    def predict(self, sets):
        return self._m.predict(sets)

    def save(self, path):
        self._m.save(str(path))

    @property
    def config(self):
        return _json.loads(self._m.config)

    @property
    def trainable_parameters(self):
        return self._m.trainable_parameters


def run(command, config):
    """Run a command ("generate", "train", "eval", "report") with a config dict."""
    _run(command, _json.dumps(config))


__all__ = [
    "ConfigError",
    "Error",
    "Model",
    "__version__",
    "closed_loop_expectation",
    "layers_required",
    "moment_order",
    "one_sided_ttest",
    "parity_samples",
    "rqc_samples",
    "rqc_state",
    "run",
    "spearman",
    "toric_snapshots",
    "xeb_exact",
]
