"""
cpnn
~~~~

Convolutional proximal neural networks, written in pure Python on top of numpy and scipy.
Each layer x ↦ Tᵀσ(Tx + b) is built on a block-circulant T with orthonormal columns, which
makes the network an averaged operator and a safe denoiser for Plug-and-Play methods.
Basic usage:

   >>> from cpnn import FilterBank, gram_residual
   >>> identity = FilterBank([[[0.0, 1.0, 0.0]]], 8)
   >>> gram_residual(identity) < 1e-12
   True
   >>> from cpnn import Layer, NetworkParams, activation_from_kind
   >>> layer = Layer(identity, [0.0], activation_from_kind("soft_threshold", 0.5))
   >>> net = NetworkParams([layer], gamma=1.0)
   >>> net.certified(), net.averagedness()
   (True, 0.5)

... and the scalar case on which ADMM-PnP diverges with an averaged denoiser:

   >>> from cpnn import divergence_example
   >>> round(divergence_example(0.75, 0.9, iters=5).extras["growth_factor"], 12)
   1.4

Training, projection and the solvers are described in the documentation under docs/.

:copyright: (c) 2026 by the cpnn authors
:license: MIT, see LICENSE for more details.
"""
import logging

from .activations import ACTIVATION_KINDS, Activation, activation_from_kind
from .algebra import (
    bcirc_apply,
    bcirc_apply_adjoint,
    circ_apply,
    filter_orthogonality_residual,
    gram_residual,
    spectral,
    spectral_inverse,
)
from .api import dumps, load_model, loads, save_model
from .data import (
    Dataset,
    gauss_kernel,
    gen_image_patches,
    gen_pwc,
    gen_split,
    load_dataset,
    mean_psnr,
    psnr_image,
    psnr_signal,
    save_dataset,
)
from .exceptions import (
    AmbiguousProjectionError,
    ContractViolation,
    CpnnError,
    DimensionError,
    NonConvergenceError,
    ParseError,
    PreconditionError,
    SingularInputError,
    SolverError,
    TrainingError,
    ValidationError,
)
from .manifold import cayley_retract, positive_retract, stiefel_project, tangent_project
from .models import GradientBundle, Layer, NetworkParams
from .network import backward, denoise, extend, forward, lift_denoise, network_apply
from .pnp import (
    PnPConfig,
    QuadraticBlur,
    QuadraticIdentity,
    ResidualDenoiser,
    Trace,
    admm_pnp,
    divergence_example,
    estimate_averagedness,
    fbs_pnp,
    oracle_denoiser,
)
from .serializer import decode, encode
from .structures import Filter, FilterBank, SpectralBlocks, StiefelPoint
from .training import (
    TrainConfig,
    TrainReport,
    project_filters,
    project_network,
    train,
    train_full,
    train_limited,
)
from .version import VERSION, __version__

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = (
    "ACTIVATION_KINDS",
    "Activation",
    "activation_from_kind",
    "bcirc_apply",
    "bcirc_apply_adjoint",
    "circ_apply",
    "filter_orthogonality_residual",
    "gram_residual",
    "spectral",
    "spectral_inverse",
    "dumps",
    "load_model",
    "loads",
    "save_model",
    "Dataset",
    "gauss_kernel",
    "gen_image_patches",
    "gen_pwc",
    "gen_split",
    "load_dataset",
    "mean_psnr",
    "psnr_image",
    "psnr_signal",
    "save_dataset",
    "AmbiguousProjectionError",
    "ContractViolation",
    "CpnnError",
    "DimensionError",
    "NonConvergenceError",
    "ParseError",
    "PreconditionError",
    "SingularInputError",
    "SolverError",
    "TrainingError",
    "ValidationError",
    "cayley_retract",
    "positive_retract",
    "stiefel_project",
    "tangent_project",
    "GradientBundle",
    "Layer",
    "NetworkParams",
    "backward",
    "denoise",
    "extend",
    "forward",
    "lift_denoise",
    "network_apply",
    "PnPConfig",
    "QuadraticBlur",
    "QuadraticIdentity",
    "ResidualDenoiser",
    "Trace",
    "admm_pnp",
    "divergence_example",
    "estimate_averagedness",
    "fbs_pnp",
    "oracle_denoiser",
    "decode",
    "encode",
    "Filter",
    "FilterBank",
    "SpectralBlocks",
    "StiefelPoint",
    "TrainConfig",
    "TrainReport",
    "project_filters",
    "project_network",
    "train",
    "train_full",
    "train_limited",
    "VERSION",
    "__version__",
)
