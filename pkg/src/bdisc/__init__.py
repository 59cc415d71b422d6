"""bdisc: behavior discovery from short multivariate motion snippets.

Pipeline: a small temporal-conv classifier embeds 20-step, 4-channel
snippets via its logits; label-guided semi-supervised K-means with an
extra free cluster groups labeled and unlabeled embeddings; a Gaussian-KDE
highest-density-region containment score decides whether a discovered
cluster is a novel behavior.
"""

__version__ = "0.1.0"

from bdisc.data import Dataset, MotionSnippet, SplitSpec, load_csv, preprocess, split_discovery
from bdisc.synth import SynthSpec, preset_spec, synth_generate

__all__ = [
    "Dataset",
    "MotionSnippet",
    "SplitSpec",
    "SynthSpec",
    "load_csv",
    "preprocess",
    "preset_spec",
    "split_discovery",
    "synth_generate",
    "__version__",
]
