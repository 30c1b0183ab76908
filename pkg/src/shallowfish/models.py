"""The three concrete models and the score transformations between them.

Autoencoder compresses the 775-bit board vector to a 128-float latent;
the classifier maps raw board vectors to three outcome classes; the
evaluator maps latents to a normalized score in (-1, 1).
"""

from __future__ import annotations

import numpy as np

from . import nn

CP_CAP = 5000
MATE_CP = 10000  # sentinel for positions where the labeler sees a forced mate
CLASS_BOUNDARY_CP = 150

LATENT_DIM = 128

# one-hot order
BLACK_WINNING, DRAWISH, WHITE_WINNING = 0, 1, 2
CLASS_NAMES = ("black_winning", "drawish", "white_winning")

AUTOENCODER_FILE = "autoencoder.w"
CLASSIFIER_FILE = "classifier.w"
EVALUATOR_FILE = "evaluator.w"


def label(cp: int) -> int:
    """Outcome class for a white-relative centipawn score.

    The +-150 boundary values themselves count as drawish.
    """
    if cp < -CLASS_BOUNDARY_CP:
        return BLACK_WINNING
    if cp > CLASS_BOUNDARY_CP:
        return WHITE_WINNING
    return DRAWISH


def label_one_hot(cp: int) -> np.ndarray:
    v = np.zeros(3, dtype=np.float32)
    v[label(cp)] = 1.0
    return v


def normalize_cp(cp: float) -> float:
    """Clamp to +-5000cp and rescale to [-1, 1]."""
    c = min(max(cp, -CP_CAP), CP_CAP)
    return 2.0 * (c + CP_CAP) / (2 * CP_CAP) - 1.0


def denormalize(v: float, _warnings: list | None = None) -> int:
    """Inverse of normalize_cp, rounded to whole centipawns."""
    if v < -1.0 or v > 1.0:
        if _warnings is not None:
            _warnings.append(v)
        v = min(max(v, -1.0), 1.0)
    return round(v * CP_CAP)


# -- architectures ----------------------------------------------------------

def build_autoencoder(seed: int = 101) -> nn.NetworkParams:
    return nn.init_network(
        [775, 512, 256, 128, 256, 512, 775],
        ["tanh", "tanh", "tanh", "tanh", "tanh", "sigmoid"],
        dropout=0.25,
        seed=seed,
    )


def build_classifier(seed: int = 202) -> nn.NetworkParams:
    return nn.init_network(
        [775, 1024, 512, 256, 3],
        ["relu", "relu", "relu", "softmax"],
        dropout=0.25,
        seed=seed,
    )


def build_evaluator(seed: int = 303) -> nn.NetworkParams:
    return nn.init_network(
        [LATENT_DIM, 2048, 2048, 2048, 1],
        ["relu", "relu", "relu", "tanh"],
        dropout=0.30,
        seed=seed,
    )


def encoder_half(autoencoder: nn.NetworkParams) -> nn.NetworkParams:
    """First three layers (775 -> 512 -> 256 -> 128), shared weights."""
    return nn.NetworkParams(autoencoder.layers[:3], dropout=0.0)


def encode_latent(autoencoder: nn.NetworkParams, features) -> np.ndarray:
    """128-float latent for one or many encoded boards (infer mode)."""
    x = np.asarray(features, dtype=np.float32)
    return nn.forward(encoder_half(autoencoder), x)


def classify(classifier: nn.NetworkParams, features) -> np.ndarray:
    """Probability triple (black winning, drawish, white winning)."""
    x = np.asarray(features, dtype=np.float32)
    return nn.forward(classifier, x)


def evaluate_static(evaluator: nn.NetworkParams, latent) -> np.ndarray:
    """Normalized white-relative value in (-1, 1) for one or many latents."""
    x = np.asarray(latent, dtype=np.float32)
    out = nn.forward(evaluator, x)
    return out[..., 0]


class ModelBundle:
    """The trained models as one unit, loaded from a directory."""

    def __init__(self, autoencoder, classifier=None, evaluator=None):
        self.autoencoder = autoencoder
        self.classifier = classifier
        self.evaluator = evaluator

    @classmethod
    def load(cls, directory):
        import os

        def maybe(name):
            path = os.path.join(directory, name)
            return nn.load_params(path) if os.path.exists(path) else None

        ae = maybe(AUTOENCODER_FILE)
        if ae is None:
            raise FileNotFoundError(f"no {AUTOENCODER_FILE} in {directory}")
        return cls(ae, maybe(CLASSIFIER_FILE), maybe(EVALUATOR_FILE))

    def predict_cp(self, features) -> int:
        """White-relative centipawn prediction for one encoded board."""
        if self.evaluator is None:
            raise ValueError("no evaluator loaded")
        latent = encode_latent(self.autoencoder, np.atleast_2d(features))
        return denormalize(float(evaluate_static(self.evaluator, latent)[0]))
