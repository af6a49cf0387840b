"""Training and HE-compatibility tooling for polynomial-activation networks."""

from .circuit import ArithmeticCircuit, DepthReport, depth, eval_circuit, fuse_batchnorm, lower
from .layers import BatchNorm, Dropout, Linear, Model, PolyActivation, ReLU, Tag, build_mlp
from .losses import boundary_loss, composite_loss, cross_entropy
from .numeric import SeededRng
from .optim import AdamW, PlateauScheduler, make_groups, selective_clip
from .polyfit import PolynomialActivation, fit_activation, horner_eval
from .stats import two_proportion_ztest
from .training import RunReport, TrainingConfig, train

__version__ = "0.1.0"
