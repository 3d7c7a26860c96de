"""Probabilistic robustness certificates for point-cloud classifiers under
parametric deformations: smooth a classifier over the deformation's parameter
space, bound the top-class probability, and convert the bound into an l1 or
l2 certified radius around the identity deformation."""

from .cloud import CloudFormatError, PointCloud, normalize, read_cloud, write_cloud
from .flows import (
    DeformationKind,
    DeformationParams,
    Distribution,
    Gaussian,
    NoMatrixFormError,
    ParameterArityError,
    Uniform,
    apply_flow,
    deform,
    flow,
    flow_many,
    homogeneous_point_map,
    make_distribution,
    param_dim,
    sample_params,
)
from .smoothing import (
    ABSTAIN,
    CertificationResult,
    PredictionResult,
    SmoothingConfig,
    certified_radius,
    certify,
    clopper_pearson_lower,
    predict,
    std_normal_quantile,
    vote,
)
from .classifiers import (
    Augmentation,
    CentroidClassifier,
    ConstantClassifier,
    MlpClassifier,
    TrainConfig,
    TrainingDivergedError,
    WeightFormatError,
    cloud_features,
    fit_centroids,
    init_mlp,
    load_weights,
    save_weights,
    train_mlp,
)
from .oracle import OracleProtocolError, OracleServer, OracleTransportError, RemoteClassifier, connect, serve_stdio
from .shapes import FAMILIES, ShapeSpec, generate_shape, load_dataset, make_dataset, save_dataset
from .harness import (
    SCALE_PRESETS,
    BenchReport,
    EnvelopeReport,
    SoundnessReport,
    SweepResult,
    SweepRow,
    SweepSpec,
    acr,
    alpha_ablation,
    bench,
    certified_accuracy_at,
    derive_seed,
    envelope,
    preset_spec,
    read_rows_csv,
    run_sweep,
    soundness_check,
    write_rows_csv,
    write_summary_json,
)

__version__ = "0.1.0"
