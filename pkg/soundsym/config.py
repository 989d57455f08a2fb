import os

# ===== PATHS =====
RESULTS_DIR = os.getenv('SOUNDSYM_RESULTS_DIR', 'results')
LOG_FILE_NAME = 'pipeline.log'
FAILED_MARKER = 'FAILED'

# ===== CORPUS =====
CSV_DELIMITER = os.getenv('SOUNDSYM_CSV_DELIMITER', ',')
CORPUS_FORMAT_VERSION = 1
GLOTTOCODE_PATTERN = r'^[a-z0-9]{4}[0-9]{4}$'
# Simulated glottocodes are 's' + 3-digit family + 4-digit language index
SIM_MAX_FAMILIES = 999
SIM_MAX_LANGUAGES = 10000
FAMILY_PATH_SEPARATOR = '/'
MACROAREAS = (
    'Africa',
    'Eurasia',
    'Papunesia',
    'Australia',
    'North America',
    'South America',
)

# Required columns per table (CLDF names)
LANGUAGE_COLUMNS = ['ID', 'Name', 'Glottocode', 'Latitude', 'Longitude', 'Macroarea', 'Family_Path']
CONCEPT_COLUMNS = ['ID', 'Name']
CONCEPT_LIST_COLUMNS = {
    'in_swadesh100': 'Swadesh_100',
    'in_tadmor100': 'Tadmor_100',
    'in_holman40': 'Holman_40',
}
FORM_COLUMNS = ['Language_ID', 'Parameter_ID', 'Segments']

# ===== COVARIANCE =====
EARTH_RADIUS_KM = 6371.0088
AREAL_CUTOFF_KM = float(os.getenv('SOUNDSYM_AREAL_CUTOFF_KM', '1000'))
KERNEL_JITTER = 1e-10
KERNEL_MAX_JITTER = 1e-6
KERNEL_JITTER_GROWTH = 10.0

# ===== MODEL =====
MODEL_FORMAT_VERSION = 1
WEIGHT_BY_PHONES = os.getenv('SOUNDSYM_WEIGHT_BY_PHONES', 'false').lower() == 'true'
CONTROLS = ('phylo', 'areal')

# Prior hyperparameters (gamma priors are shape / rate)
PRIOR_INTERCEPT_MEAN = 0.0
PRIOR_INTERCEPT_SD = 1.0
PRIOR_SCALE_SD = 1.0
PRIOR_PHI_SHAPE = 2.0
PRIOR_PHI_RATE = 1.0
PRIOR_THETA_SHAPE = 2.0
PRIOR_THETA_RATE = 0.1

# ===== INFERENCE =====
CHAINS = int(os.getenv('SOUNDSYM_CHAINS', '4'))
WARMUP = int(os.getenv('SOUNDSYM_WARMUP', '1000'))
ITERATIONS = int(os.getenv('SOUNDSYM_ITERATIONS', '1000'))
TARGET_ACCEPT = 0.9
MAX_TREE_DEPTH = 10
MAX_ENERGY_ERROR = 1000.0
UNRELIABLE_DIVERGENCE_FRACTION = 0.10
INIT_JITTER = 0.5

# Windowed warmup (Stan defaults)
ADAPT_INIT_BUFFER = 75
ADAPT_TERM_BUFFER = 50
ADAPT_BASE_WINDOW = 25

MAP_MAX_ITER = 5000
MAP_GTOL = 1e-6
MAP_MAX_RETRIES = 10

DRAWS_FORMAT_VERSION = 1

# ===== LOO =====
PARETO_K_THRESHOLD = 0.7
PARETO_K_WARN_FRACTION = 0.05
VARIANTS = {
    'full': ('phylo', 'areal'),
    'phylo_only': ('phylo',),
    'areal_only': ('areal',),
    'none': (),
}
# Labels used by the published comparison tables
VARIANT_LABELS = {
    'full': 'with_c',
    'phylo_only': 'phylo_c',
    'areal_only': 'area_c',
    'none': 'no_c',
}

# ===== PARALLELISM =====
PARALLEL_WORKERS = int(os.getenv('SOUNDSYM_WORKERS', '1'))

# ===== LOGGING =====
LOG_LEVEL = os.getenv('SOUNDSYM_LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# ===== EXIT CODES =====
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_UNRELIABLE = 3
