"""
Configuration file for CODReg
Defaults for every metric, training and synthetic-task knob live here.
Experiment files only need to override what differs.
"""

import os

# ====================================
# Metric Configuration
# ====================================

# Kernel on representations / covariates.
# Options: 'gaussian', 'linear', 'delta'
X_KERNEL = 'gaussian'
# None = median heuristic on the pooled batch
X_BANDWIDTH = None

# Kernel on labels (source labels and target pseudo-labels)
Y_KERNEL = 'gaussian'
Y_BANDWIDTH = None

# Equality threshold of the delta kernel (0 = exact match)
DELTA_TOLERANCE = 0.0

# Regularizer inside B = eps*n*(G_Y + eps*n*I)^-1
EPSILON = 1e-2

# Ridge on the label kernel inverse, (K_Y + lambda*I)^-1
RIDGE_LAMBDA = 1e-3

# Which form of the modified conditional mean block to use.
# 'corrected' = one within-source and one within-target term
# 'printed'   = within-target term twice and no within-source term
MOD_VARIANT = 'corrected'

# ====================================
# Model Configuration
# ====================================

# Hidden widths of the tanh extractor; the last entry is the representation dim
HIDDEN_SIZES = (32, 16)

# ====================================
# Training Configuration
# ====================================

LAMBDA1 = 1.0   # weight of COD / modified COD
LAMBDA2 = 1.0   # weight of KGW

BATCH_SIZE = 32
EPOCHS = 50
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
SEED = 0

# Epochs to train before the pseudo-label terms (cod / cod_mod) switch on
WARMUP_EPOCHS = 0

# Terms of the objective. Options: 'mse', 'kgw', 'cod', 'cod_mod'
ABLATION = ('mse', 'kgw', 'cod_mod')

# Abort when the loss exceeds this value
DIVERGENCE_LIMIT = 1e6

# ====================================
# Synthetic Task Configuration
# ====================================

SYNTH_N = 500
SYNTH_CURVE = 'arc'          # 'arc', 'spiral', 'poly'
SYNTH_SOURCE_LABELS = (0.0, 0.7)
SYNTH_TARGET_LABELS = (0.3, 1.0)
SYNTH_ROTATION = 1.5707963267948966   # pi/2
SYNTH_TRANSLATION = ()          # empty = no translation
SYNTH_SCALE = 1.0
SYNTH_NOISE = 0.05

# ====================================
# Gradient Check Configuration
# ====================================

GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-3

# ====================================
# Ablation Configuration
# ====================================

# Objective combinations compared by `ablate`, in row order
ABLATION_ROWS = (
    ('mse',),
    ('mse', 'kgw'),
    ('mse', 'cod'),
    ('mse', 'kgw', 'cod'),
    ('mse', 'kgw', 'cod_mod'),
)

ABLATION_SEEDS = (0, 1, 2, 3, 4)

# Hyper-parameter grid for the sensitivity sweep
SWEEP_LAMBDA1 = (0.1, 0.5, 1.0, 2.0)
SWEEP_LAMBDA2 = (0.1, 0.5, 1.0, 2.0)

# ====================================
# Runtime Configuration
# ====================================

# Output directory for reports, checkpoints and embeddings
OUT_DIR = os.getenv('CODREG_OUT_DIR', 'runs')

# Worker processes for multi-seed runs (1 = in-process)
WORKERS = int(os.getenv('CODREG_WORKERS', '1'))

LOG_LEVEL = os.getenv('CODREG_LOG_LEVEL', 'INFO')

# Version of schemas/report.schema.json embedded in every report
REPORT_SCHEMA_VERSION = '1.0'
