"""Sharpness measures of the training-loss Hessian, their Monte-Carlo
estimators, sharpness-aware optimizer steps, and constructive recovery of
spectra and Hessian entries from integral probes."""

from .errors import (ConfigError, DataError, NumericalError,
                     SharpnessLabError)
from .linalg import (Polynomial, Spectrum, SymmetricMatrix, quadratic_form,
                     quadratic_form_batch, real_poly_roots, symmetric_eig,
                     vandermonde_solve)
from .measures import (DiracPoint, GradientDirectionDirac, HypercubeLebesgue,
                       MeasureSpec, SeededStream, StandardGaussian,
                       UnitSphereUniform, WeightedSamples,
                       is_rotation_invariant, is_scale_invariant, sample)
from .sharpness import (CharPoly, Determinant, Estimate, Frobenius, Moment,
                        SharpnessSpec, SpecPreset, Trace, estimate_R,
                        estimate_S, estimate_S_from_samples, measure_exact,
                        pseudo_det, regularizer_gradient)
from .universality import (HessianProbeSet, MomentProbe,
                           collect_hessian_probes, convergence_radius,
                           default_probe_nodes, probe_moments,
                           reconstruct_eigenvalues, reconstruct_hessian)
from .losses import (Dataset, LossFunction, MlpLoss, MlpModel, QuadraticLoss,
                     RotInvToy, SaddleToy, ScaleInvToy, finite_diff_hessian,
                     frobenius_sq_estimate, hutchinson_trace, hvp, load_idx,
                     load_digits64, mlp_loss_and_grad, synth_blobs, write_idx)
from .optim import (LrSchedule, RunRecord, SharpnessTracking, TrainConfig,
                    TrainResult, compute_step, load_checkpoint,
                    save_checkpoint, step_det, step_frob, step_generic,
                    step_sam, step_sgd, step_trace, train)

__version__ = "0.1.0"
